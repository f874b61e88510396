"""Dense numeric kernels shared by every other module.

Everything is float64 and deterministic: the same inputs produce
bit-identical outputs regardless of BLAS thread count, because each
output element is reduced in a fixed order.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

MATRIX_MAGIC = b"TNETMAT1"


class NonFiniteError(ValueError):
    """Raised when a NaN/Inf shows up where the math requires finite values."""


def ensure_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {name}")
    return arr


# ---------------------------------------------------------------------------
# elementary kernels (thin wrappers over numpy, kept for shape checking and
# so call sites read like the math)
# ---------------------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def tanh(x):
    return np.tanh(x)


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow; equals -log(1 + e^-x)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))),
                   x - np.log1p(np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def row_sum(a: np.ndarray) -> np.ndarray:
    return a.sum(axis=-1)


def col_sum(a: np.ndarray) -> np.ndarray:
    return a.sum(axis=-2)


def reduce_max(a: np.ndarray, axis=None):
    return a.max(axis=axis)


def masked_softmax(scores: np.ndarray, mask: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax over the positions where mask is 1; exact zeros elsewhere.

    Uses max-subtraction over the unmasked entries for stability. Works on
    batched inputs; `axis` selects the normalization axis.
    """
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if scores.shape != mask.shape:
        raise ValueError(f"masked_softmax shape mismatch: {scores.shape} vs {mask.shape}")
    active = mask > 0
    if not np.all(active.any(axis=axis)):
        raise ValueError("masked_softmax: mask selects no entries")
    neg_inf = np.where(active, scores, -np.inf)
    shift = neg_inf.max(axis=axis, keepdims=True)
    e = np.where(active, np.exp(scores - shift), 0.0)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_vjp(probs: np.ndarray, dprobs: np.ndarray, axis: int = -1) -> np.ndarray:
    """Backward of a (masked) softmax: p * (dp - sum(p * dp))."""
    inner = (probs * dprobs).sum(axis=axis, keepdims=True)
    return probs * (dprobs - inner)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), 0, beta1, beta2, eps)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> None:
    """One Adam update with bias correction, in place (single writer)."""
    if param.shape != grad.shape:
        raise ValueError(f"adam_step shape mismatch: {param.shape} vs {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("adam_step: non-finite gradient")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# seeded RNG substreams
# ---------------------------------------------------------------------------

def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


class RngStream:
    """Named substream of a master seed.

    (seed, name, index) fully determines the draw sequence, so adding or
    reordering consumers elsewhere never perturbs this stream.
    """

    def __init__(self, seed: int, name: str, index: int = 0):
        self.seed = int(seed)
        self.name = name
        self.index = int(index)
        ss = np.random.SeedSequence([self.seed, _name_key(name), self.index])
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self.calls = 0

    def random(self, size=None):
        self.calls += 1
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        self.calls += 1
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        self.calls += 1
        return self._gen.permutation(n)

    def uniform(self, low, high, size=None):
        self.calls += 1
        return self._gen.uniform(low, high, size)

    def get_state(self) -> dict:
        return {
            "seed": self.seed,
            "name": self.name,
            "index": self.index,
            "calls": self.calls,
            "bit_generator": self._gen.bit_generator.state,
        }

    def set_state(self, state: dict) -> None:
        self.calls = state["calls"]
        self._gen.bit_generator.state = state["bit_generator"]


class RngFactory:
    """Hands out named substreams of one master seed and remembers them
    so a checkpoint can serialize every stream that was ever used."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[tuple, RngStream] = {}

    def stream(self, name: str, index: int = 0) -> RngStream:
        key = (name, index)
        if key not in self._streams:
            self._streams[key] = RngStream(self.seed, name, index)
        return self._streams[key]

    def get_state(self) -> dict:
        return {
            "seed": self.seed,
            "streams": [s.get_state() for s in self._streams.values()],
        }

    def set_state(self, state: dict) -> None:
        for entry in state["streams"]:
            s = self.stream(entry["name"], entry["index"])
            s.set_state(entry)


# ---------------------------------------------------------------------------
# categorical / degree-weighted sampling
# ---------------------------------------------------------------------------

def categorical_sample(probs: np.ndarray, rng: RngStream) -> int:
    """Inverse-CDF draw from a probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise ValueError("categorical_sample: negative probabilities")
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"categorical_sample: probabilities sum to {total}, not 1")
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, len(probs) - 1)


def degree_power_cdf(degrees: np.ndarray, power: float = 0.75) -> np.ndarray:
    """Cumulative weights for drawing nodes proportional to degree^power."""
    degrees = np.asarray(degrees, dtype=np.float64)
    if np.all(degrees <= 0):
        raise ValueError("degree sampler: all degrees are zero")
    w = np.where(degrees > 0, degrees, 0.0) ** power
    return np.cumsum(w)


def sample_from_cdf(cdf: np.ndarray, rng: RngStream, size=None):
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def degree_34_sampler(degrees: np.ndarray, rng: RngStream) -> int:
    """Draw one node with P(v) proportional to degree(v)^(3/4)."""
    return int(sample_from_cdf(degree_power_cdf(degrees), rng))


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    worst_index: int
    rel_tol: float
    errors: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.rel_tol


def finite_diff_check(loss, params: dict, grads: dict, h: float = 1e-5,
                      rel_tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic grads against central differences of `loss`.

    `loss` is called as loss(params) and must be pure in the params it is
    given. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6).
    Report-only: never raises on failure.
    """
    worst = (0.0, "", -1)
    errors = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        flat = p.reshape(-1)
        errs = np.zeros(flat.shape[0])
        for k in range(flat.shape[0]):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss(params)
            flat[k] = orig - h
            lm = loss(params)
            flat[k] = orig
            num = (lp - lm) / (2.0 * h)
            ana = g.reshape(-1)[k]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-6)
            errs[k] = err
            if err > worst[0]:
                worst = (err, name, k)
        errors[name] = errs
    return GradCheckReport(worst[0], worst[1], worst[2], rel_tol, errors)


# ---------------------------------------------------------------------------
# matrix checkpoint format: little-endian binary plus a text header
# ---------------------------------------------------------------------------

def write_matrix(path: str, mat: np.ndarray) -> None:
    """Write magic tag, rows, cols, then raw little-endian float64 values;
    a `<path>.hdr` text file records the shape and a payload checksum."""
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"write_matrix expects 2-D, got shape {mat.shape}")
    ensure_finite(mat, f"matrix for {path}")
    payload = mat.astype("<f8").tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MATRIX_MAGIC)
        f.write(np.array(mat.shape, dtype="<u8").tobytes())
        f.write(payload)
    os.replace(tmp, path)
    hdr = {
        "rows": int(mat.shape[0]),
        "cols": int(mat.shape[1]),
        "dtype": "float64-le",
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    tmp = path + ".hdr.tmp"
    with open(tmp, "w") as f:
        json.dump(hdr, f, indent=1)
        f.write("\n")
    os.replace(tmp, path + ".hdr")


def read_matrix(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(len(MATRIX_MAGIC))
        if magic != MATRIX_MAGIC:
            raise ValueError(f"{path}: bad magic tag {magic!r}")
        rows, cols = np.frombuffer(f.read(16), dtype="<u8")
        payload = f.read()
    mat = np.frombuffer(payload, dtype="<f8").reshape(int(rows), int(cols)).copy()
    hdr_path = path + ".hdr"
    if os.path.exists(hdr_path):
        with open(hdr_path) as f:
            hdr = json.load(f)
        digest = hashlib.sha256(payload).hexdigest()
        if hdr["sha256"] != digest:
            raise ValueError(f"{path}: checksum mismatch")
        if (hdr["rows"], hdr["cols"]) != (int(rows), int(cols)):
            raise ValueError(f"{path}: header shape disagrees with binary")
    return ensure_finite(mat, path)
