"""Training configuration: every hyperparameter of the training loop, the
variant wiring, and the flat key=value config-file format.

Variants:
  ACNE      adversarial training, mutual + topological attention
  ACNE-mu   adversarial, mutual attention only
  CNE       joint skip-gram-style loss, both attentions
  CNE-mu    joint loss, mutual only
  CNE-top   joint loss, topological only
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

ADVERSARIAL_MODES = ("ACNE", "ACNE-mu")
JOINT_MODES = ("CNE", "CNE-mu", "CNE-top")
MODES = ADVERSARIAL_MODES + JOINT_MODES


def eta_schedule(train_ratio: float) -> float:
    """Supervision weight by training-edge percentage: sparse splits get no
    direct edge supervision, dense splits the full weight."""
    if train_ratio <= 35.0:
        return 0.0
    if train_ratio < 75.0:
        return 0.5
    return 1.0


@dataclass
class TrainConfig:
    mode: str = "ACNE"
    dim: int = 100
    k_neg: int = 1
    batch_size: int = 256
    epochs: int = 50
    d_steps: int = 2
    g_steps: int = 1
    lr: float = 0.001
    pad_length: int = 300
    min_count: int = 1
    pretrain_epochs: int = 20
    # attention weights; -1 means "resolve from mode / default"
    lam1: float = -1.0
    lam2: float = -1.0
    lam3: float = -1.0
    # adversarial loss weights
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    eta: float = -1.0            # -1 -> ratio schedule
    # joint-loss weights (CNE family)
    alpha_ss: float = 1.0
    alpha_tt: float = 1.0
    alpha_st: float = 1.0
    alpha_ts: float = -1.0       # -1 -> ratio schedule
    # final-embedding aggregation
    agg_samples: int = 16
    exact_threshold: int = 4096
    # internal validation / early stopping
    val_fraction: float = 0.05
    patience: int = 5
    early_stop: bool = True
    # inductive stage
    mapper_window: int = 3
    mapper_batch: int = 512
    mapper_epochs: int = 30
    posttrain_epochs: int = 10
    posttrain_batch: int = 32
    lambda_reg: float = 0.1
    # engineering knobs
    seed: int = 1
    steps_per_epoch: int = 0     # 0 -> ceil(|train| / batch_size)
    max_chunk_cost: int = 8_000_000
    checkpoint_every: int = 0    # epochs; 0 -> only on completion

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("dim", "batch_size", "epochs", "d_steps", "g_steps",
                     "pad_length", "mapper_window", "mapper_batch",
                     "posttrain_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.k_neg < 0:
            raise ValueError("k_neg must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def resolved(self, train_ratio: float) -> "TrainConfig":
        """Fill every schedule/mode-dependent field with a concrete value.

        The *-mu modes force the topological weights to zero and CNE-top
        forces the mutual weight to zero, regardless of configured values.
        """
        self.validate()
        cfg = dataclasses.replace(self)
        if cfg.lam1 < 0:
            cfg.lam1 = 1.0
        if cfg.lam2 < 0:
            cfg.lam2 = 1.0
        if cfg.lam3 < 0:
            cfg.lam3 = 1.0
        if cfg.mode.endswith("-mu"):
            cfg.lam2 = 0.0
            cfg.lam3 = 0.0
        elif cfg.mode == "CNE-top":
            cfg.lam1 = 0.0
        if cfg.eta < 0:
            cfg.eta = eta_schedule(train_ratio)
        if cfg.alpha_ts < 0:
            cfg.alpha_ts = eta_schedule(train_ratio)
        return cfg

    @property
    def adversarial(self) -> bool:
        return self.mode in ADVERSARIAL_MODES

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)

    def to_file(self, path: str) -> None:
        with open(path, "w") as f:
            for field in dataclasses.fields(self):
                f.write(f"{field.name} = {getattr(self, field.name)}\n")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(value, fields[key].type)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        mapping = {}
        with open(path) as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, value = line.split("=", 1)
                mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)


def _coerce(value, typ):
    if isinstance(value, str):
        if typ == "bool" or typ is bool:
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if typ == "int" or typ is int:
            return int(value)
        if typ == "float" or typ is float:
            return float(value)
        return value
    return value


def apply_overrides(cfg: TrainConfig, overrides: list[str]) -> TrainConfig:
    """key=value strings (CLI flags) win over the config file."""
    mapping = cfg.to_mapping()
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    return TrainConfig.from_mapping(mapping)
