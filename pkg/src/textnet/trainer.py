"""End-to-end training: generator pretraining, alternating discriminator /
generator steps, the joint-loss baseline used by the CNE variants, final
embedding aggregation, and bit-exact checkpointing.

An epoch runs ceil(|train| / B) alternation blocks, each consisting of the
configured number of discriminator steps followed by generator steps, so
one epoch sees roughly one pass over the training edges.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import adversarial as adv
from . import attention
from .adversarial import AdvConfig
from .attention import AttentionConfig
from .config import TrainConfig
from .corpus import TextTensor, TextualGraph, Vocabulary, build_text_tensor, encode_texts
from .numerics import (AdamState, NonFiniteError, RngFactory, adam_step,
                       degree_power_cdf, ensure_finite, log_sigmoid,
                       read_matrix, sample_from_cdf, write_matrix)

log = logging.getLogger(__name__)


@dataclass
class ModelParams:
    struct: np.ndarray          # (n_nodes, d) structure embeddings
    words: np.ndarray           # (vocab, d) word embeddings, row 0 frozen zero
    adam_struct: AdamState
    adam_words: AdamState

    @classmethod
    def init(cls, n_nodes: int, vocab_size: int, dim: int, rng) -> "ModelParams":
        scale = 0.5 / dim
        struct = rng.uniform(-scale, scale, (n_nodes, dim))
        words = rng.uniform(-scale, scale, (vocab_size, dim))
        words[0] = 0.0
        return cls(struct, words,
                   AdamState.for_param(struct), AdamState.for_param(words))


@dataclass
class TrainContext:
    """Everything the loops need besides the parameters."""
    text: TextTensor
    train_edges: np.ndarray          # edges actually trained on
    val_edges: np.ndarray            # internal early-stop holdout
    degree_cdf: np.ndarray           # degree^(3/4) over training degrees
    neighbors: list                  # per node: np.ndarray of train neighbours
    active: np.ndarray               # nodes visible during training
    n_nodes: int
    edge_set: set                    # all real undirected edges, as (u, v) u<v

    @classmethod
    def build(cls, graph: TextualGraph, vocab: Vocabulary, split,
              cfg: TrainConfig, rngs: RngFactory) -> "TrainContext":
        text = build_text_tensor(encode_texts(graph, vocab), cfg.pad_length)
        train = np.asarray(split.train_edges)
        if len(train) == 0:
            raise ValueError("empty training split")
        val = np.zeros((0, 2), dtype=np.int64)
        if cfg.early_stop and cfg.val_fraction > 0 and len(train) >= 20:
            n_val = max(1, int(round(cfg.val_fraction * len(train))))
            perm = rngs.stream("val_split").permutation(len(train))
            val = train[np.sort(perm[:n_val])]
            train = train[np.sort(perm[n_val:])]
        degrees = np.zeros(graph.node_count, dtype=np.int64)
        np.add.at(degrees, train[:, 0], 1)
        np.add.at(degrees, train[:, 1], 1)
        neighbors = [[] for _ in range(graph.node_count)]
        for u, v in train:
            neighbors[u].append(v)
            neighbors[v].append(u)
        neighbors = [np.array(sorted(ns), dtype=np.int64) for ns in neighbors]
        active = np.sort(np.asarray(split.seen)) if hasattr(split, "seen") \
            else np.arange(graph.node_count)
        edge_set = {(int(u), int(v)) for u, v in graph.edges}
        return cls(text, train, val, degree_power_cdf(degrees), neighbors,
                   active, graph.node_count, edge_set)


def _oriented(edges: np.ndarray, flips: np.ndarray) -> np.ndarray:
    out = edges.copy()
    out[flips] = out[flips][:, ::-1]
    return out


# ---------------------------------------------------------------------------
# generator pretraining (supervised skip-gram over training edges)
# ---------------------------------------------------------------------------

def pretrain_generator(ctx: TrainContext, params: ModelParams, cfg: TrainConfig,
                       rngs: RngFactory) -> list:
    """Ascend the negative-sampled log generator probability of training
    edges for cfg.pretrain_epochs passes; returns the per-epoch losses."""
    if len(ctx.train_edges) == 0:
        raise ValueError("cannot pretrain on an empty training split")
    rng = rngs.stream("pretrain")
    history = []
    both = np.concatenate([ctx.train_edges, ctx.train_edges[:, ::-1]])
    for _ in range(cfg.pretrain_epochs):
        order = rng.permutation(len(both))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = both[order[start:start + cfg.batch_size]]
            negs = sample_from_cdf(ctx.degree_cdf, rng,
                                   size=(len(batch), cfg.k_neg)) \
                if cfg.k_neg else np.zeros((len(batch), 0), dtype=np.int64)
            grad = np.zeros_like(params.struct)
            coeff = np.full(len(batch), -1.0 / len(batch))
            vals = adv.accumulate_ns_grads(batch[:, 0], batch[:, 1], negs,
                                           params.struct, coeff, grad)
            adam_step(params.struct, grad, params.adam_struct, cfg.lr)
            total += -float(vals.mean())
        history.append(total * cfg.batch_size / len(both))
    return history


# ---------------------------------------------------------------------------
# adversarial steps
# ---------------------------------------------------------------------------

def _attn_cfg(cfg: TrainConfig) -> AttentionConfig:
    return AttentionConfig(cfg.lam1, cfg.lam2, cfg.lam3)


def _adv_cfg(cfg: TrainConfig) -> AdvConfig:
    return AdvConfig(cfg.k_neg, cfg.alpha1, cfg.alpha2, cfg.alpha3, cfg.eta)


def d_step(ctx: TrainContext, params: ModelParams, cfg: TrainConfig,
           rngs: RngFactory) -> float:
    """One discriminator update: B positive edges plus B*K generator-sampled
    fakes; Adam on the word table only."""
    rng = rngs.stream("d_step")
    m = len(ctx.train_edges)
    pick = rng.integers(0, m, size=cfg.batch_size)
    flips = rng.random(cfg.batch_size) < 0.5
    pos = _oriented(ctx.train_edges[pick], flips)
    neg_list = []
    for _ in range(cfg.k_neg):
        fakes = adv.gen_sample_rows(pos[:, 0], params.struct,
                                    rngs.stream("d_negatives"),
                                    active=ctx.active,
                                    degree_cdf=ctx.degree_cdf)
        neg_list.append(np.stack([pos[:, 0], fakes], axis=1))
    neg = np.concatenate(neg_list) if neg_list else np.zeros((0, 2), np.int64)
    loss, dW = adv.disc_loss_and_grad(pos, neg, params.words, params.struct,
                                      ctx.text, _adv_cfg(cfg), _attn_cfg(cfg),
                                      max_cost=cfg.max_chunk_cost)
    if not np.isfinite(loss):
        raise NonFiniteError(f"discriminator loss became {loss}")
    adam_step(params.words, dW, params.adam_words, cfg.lr)
    params.words[0] = 0.0
    return loss


def _reward_fn(ctx: TrainContext, params: ModelParams, cfg: TrainConfig):
    acfg = _attn_cfg(cfg)

    def reward(ii, jj):
        pairs = np.stack([jj, ii], axis=1)     # D(v_j, v_i)
        zt_j, zt_i = adv.context_batch_forward(pairs, params.words,
                                               params.struct, ctx.text, acfg,
                                               max_cost=cfg.max_chunk_cost)
        return log_sigmoid(-np.sum(zt_i * zt_j, axis=1))
    return reward


def g_step(ctx: TrainContext, params: ModelParams, cfg: TrainConfig,
           rngs: RngFactory) -> dict:
    """One generator update: B sampled vertices, policy-gradient reward from
    the frozen discriminator plus the supervised edge term; Adam on the
    structure table only."""
    rng = rngs.stream("g_step")
    batch = ctx.active[rng.integers(0, len(ctx.active), size=cfg.batch_size)]
    grad, info = adv.gen_policy_grad(batch, params.struct,
                                     _reward_fn(ctx, params, cfg),
                                     ctx.neighbors, ctx.degree_cdf,
                                     _adv_cfg(cfg),
                                     rngs.stream("g_sample"),
                                     rngs.stream("g_negatives"),
                                     active=ctx.active)
    adam_step(params.struct, grad, params.adam_struct, cfg.lr)
    return info


# ---------------------------------------------------------------------------
# joint-loss baseline (CNE variants)
# ---------------------------------------------------------------------------

def joint_loss_step(edges: np.ndarray, negs: np.ndarray, params: ModelParams,
                    text: TextTensor, cfg: TrainConfig):
    """Skip-gram-style joint objective over the four embedding pairings
    (structure-structure, text-text, structure-text, text-structure), each
    negative-sampled.

    Returns (loss, grad_struct, grad_words, terms) where terms holds the
    per-term mean log-likelihoods and loss is their negated weighted sum.
    """
    acfg = _attn_cfg(cfg)
    B, K = negs.shape if negs.size else (len(edges), 0)
    ii, jj = edges[:, 0], edges[:, 1]
    zs_i, zs_j = params.struct[ii], params.struct[jj]

    from .numerics import sigmoid

    zt_ij, zt_ji = adv.context_batch_forward(edges, params.words, params.struct,
                                             text, acfg, cfg.max_chunk_cost)
    if K:
        neg_pairs = np.stack([negs.reshape(-1),
                              np.repeat(ii, K)], axis=1)      # (B*K, 2) = (k, i)
        zt_ki, _ = adv.context_batch_forward(neg_pairs, params.words,
                                             params.struct, text, acfg,
                                             cfg.max_chunk_cost)
        zt_ki = zt_ki.reshape(B, K, -1)
        zs_k = params.struct[negs]
    else:
        neg_pairs = np.zeros((0, 2), dtype=np.int64)
        zt_ki = np.zeros((B, 0, zt_ij.shape[1]))
        zs_k = np.zeros((B, 0, params.struct.shape[1]))

    def pos_ll(u, v):
        return log_sigmoid(np.sum(u * v, axis=-1))

    def neg_ll(u, vk):
        return log_sigmoid(-np.einsum("bd,bkd->bk", u, vk)).sum(axis=-1)

    ll_ss = (pos_ll(zs_i, zs_j) + neg_ll(zs_i, zs_k)).mean()
    ll_tt = (pos_ll(zt_ij, zt_ji) + neg_ll(zt_ij, zt_ki)).mean()
    ll_st = (pos_ll(zs_i, zt_ji) + neg_ll(zs_i, zt_ki)).mean()
    ll_ts = (pos_ll(zt_ij, zs_j) + neg_ll(zt_ij, zs_k)).mean()
    terms = {"ss": float(ll_ss), "tt": float(ll_tt),
             "st": float(ll_st), "ts": float(ll_ts)}
    loss = -(cfg.alpha_ss * ll_ss + cfg.alpha_tt * ll_tt
             + cfg.alpha_st * ll_st + cfg.alpha_ts * ll_ts)

    # gradients of `loss`; w(1-sigma) for positive terms, -w*sigma for negatives
    dZ = np.zeros_like(params.struct)
    dW = np.zeros_like(params.words)
    d_zt_ij = np.zeros_like(zt_ij)
    d_zt_ji = np.zeros_like(zt_ji)
    d_zt_ki = np.zeros_like(zt_ki)

    def add_pos(w, u, v, du, dv):
        c = -w / B * (1.0 - sigmoid(np.sum(u * v, axis=-1)))
        du += c[:, None] * v
        dv += c[:, None] * u

    c = -cfg.alpha_ss / B * (1.0 - sigmoid(np.sum(zs_i * zs_j, axis=-1)))
    np.add.at(dZ, ii, c[:, None] * zs_j)
    np.add.at(dZ, jj, c[:, None] * zs_i)
    add_pos(cfg.alpha_tt, zt_ij, zt_ji, d_zt_ij, d_zt_ji)
    c = -cfg.alpha_st / B * (1.0 - sigmoid(np.sum(zs_i * zt_ji, axis=-1)))
    np.add.at(dZ, ii, c[:, None] * zt_ji)
    d_zt_ji += c[:, None] * zs_i
    c = -cfg.alpha_ts / B * (1.0 - sigmoid(np.sum(zt_ij * zs_j, axis=-1)))
    np.add.at(dZ, jj, c[:, None] * zt_ij)
    d_zt_ij += c[:, None] * zs_j

    if K:
        def neg_coeff(w, u, vk):
            return w / B * sigmoid(np.einsum("bd,bkd->bk", u, vk))

        c = neg_coeff(cfg.alpha_ss, zs_i, zs_k)                    # (B, K)
        np.add.at(dZ, negs.reshape(-1),
                  (c[:, :, None] * zs_i[:, None, :]).reshape(-1, zs_i.shape[1]))
        np.add.at(dZ, ii, (c[:, :, None] * zs_k).sum(axis=1))
        c = neg_coeff(cfg.alpha_tt, zt_ij, zt_ki)
        d_zt_ki += c[:, :, None] * zt_ij[:, None, :]
        d_zt_ij += (c[:, :, None] * zt_ki).sum(axis=1)
        c = neg_coeff(cfg.alpha_st, zs_i, zt_ki)
        d_zt_ki += c[:, :, None] * zs_i[:, None, :]
        np.add.at(dZ, ii, (c[:, :, None] * zt_ki).sum(axis=1))
        c = neg_coeff(cfg.alpha_ts, zt_ij, zs_k)
        np.add.at(dZ, negs.reshape(-1),
                  (c[:, :, None] * zt_ij[:, None, :]).reshape(-1, zs_i.shape[1]))
        d_zt_ij += (c[:, :, None] * zs_k).sum(axis=1)

    adv_backward_pairs(edges, d_zt_ij, d_zt_ji, params, text, acfg, dW,
                       cfg.max_chunk_cost)
    if K:
        adv_backward_pairs(neg_pairs, d_zt_ki.reshape(B * K, -1),
                           np.zeros((B * K, zt_ij.shape[1])), params, text,
                           acfg, dW, cfg.max_chunk_cost)
    return float(loss), dZ, dW, terms


def adv_backward_pairs(pairs, g_first, g_second, params, text, acfg, out_dW,
                       max_cost):
    """Recompute the forward pass chunk-wise and backpropagate the given
    upstream gradients into the word table."""
    for idx, eff in attention.chunk_pairs_by_length(text.lengths[pairs[:, 0]],
                                                    text.lengths[pairs[:, 1]],
                                                    max_cost=max_cost):
        aa, bb = pairs[idx, 0], pairs[idx, 1]
        ids_a, ids_b = text.ids[aa, :eff], text.ids[bb, :eff]
        pair = attention.forward_pairs(
            attention.embed_texts(params.words, ids_a),
            attention.embed_texts(params.words, ids_b),
            text.mask[aa, :eff], text.mask[bb, :eff],
            params.struct[aa], params.struct[bb], acfg)
        dta, dtb = attention.context_backward(pair, g_first[idx], g_second[idx])
        attention.scatter_text_grads(dta, ids_a, params.words.shape[0], out=out_dW)
        attention.scatter_text_grads(dtb, ids_b, params.words.shape[0], out=out_dW)


def joint_step(ctx: TrainContext, params: ModelParams, cfg: TrainConfig,
               rngs: RngFactory) -> float:
    rng = rngs.stream("joint_step")
    m = len(ctx.train_edges)
    pick = rng.integers(0, m, size=cfg.batch_size)
    flips = rng.random(cfg.batch_size) < 0.5
    edges = _oriented(ctx.train_edges[pick], flips)
    negs = sample_from_cdf(ctx.degree_cdf, rngs.stream("joint_negatives"),
                           size=(len(edges), cfg.k_neg)) \
        if cfg.k_neg else np.zeros((len(edges), 0), dtype=np.int64)
    loss, dZ, dW, _ = joint_loss_step(edges, negs, params, ctx.text, cfg)
    if not np.isfinite(loss):
        raise NonFiniteError(f"joint loss became {loss}")
    adam_step(params.struct, dZ, params.adam_struct, cfg.lr)
    adam_step(params.words, dW, params.adam_words, cfg.lr)
    params.words[0] = 0.0
    return loss


# ---------------------------------------------------------------------------
# validation scoring (for early stopping)
# ---------------------------------------------------------------------------

def pair_scores(pairs: np.ndarray, params: ModelParams, text: TextTensor,
                cfg: TrainConfig, struct=None) -> np.ndarray:
    """Inner product of the pair-conditioned embeddings [z^s, z^t]."""
    struct = params.struct if struct is None else struct
    zt_i, zt_j = adv.context_batch_forward(pairs, params.words, struct, text,
                                           _attn_cfg(cfg), cfg.max_chunk_cost)
    s = np.sum(struct[pairs[:, 0]] * struct[pairs[:, 1]], axis=1)
    return s + np.sum(zt_i * zt_j, axis=1)


def _validation_auc(ctx: TrainContext, params: ModelParams, cfg: TrainConfig,
                    rngs: RngFactory, epoch: int) -> float:
    from .evaluation import auc_score, gen_fake_edges
    if len(ctx.val_edges) == 0:
        return float("nan")
    fakes = gen_fake_edges(ctx.val_edges, ctx.edge_set, ctx.n_nodes,
                           rngs.stream("val_fakes", epoch),
                           candidates=ctx.active)
    pos = pair_scores(ctx.val_edges, params, ctx.text, cfg)
    neg = pair_scores(fakes, params, ctx.text, cfg)
    return auc_score(pos, neg)


# ---------------------------------------------------------------------------
# the epoch loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_auc: float = float("nan")


def train(ctx: TrainContext, params: ModelParams, cfg: TrainConfig,
          rngs: RngFactory, checkpoint_dir: str | None = None,
          start_epoch: int = 0, history: list | None = None,
          best: dict | None = None) -> TrainResult:
    """Run the configured number of epochs (resuming from a checkpoint when
    start_epoch > 0); early-stops on internal validation AUC when enabled.

    On a non-finite loss a diagnostic checkpoint is written (when a
    checkpoint directory is configured) and NonFiniteError propagates.
    """
    history = history if history is not None else []
    best = best or {"auc": -1.0, "epoch": -1, "struct": None, "words": None}
    steps = cfg.steps_per_epoch or max(1, -(-len(ctx.train_edges) // cfg.batch_size))
    completed = start_epoch
    try:
        for epoch in range(start_epoch, cfg.epochs):
            d_losses, g_rewards, j_losses = [], [], []
            for _ in range(steps):
                if cfg.adversarial:
                    for _ in range(cfg.d_steps):
                        d_losses.append(d_step(ctx, params, cfg, rngs))
                    for _ in range(cfg.g_steps):
                        g_rewards.append(g_step(ctx, params, cfg, rngs)["mean_reward"])
                else:
                    j_losses.append(joint_step(ctx, params, cfg, rngs))
            val_auc = _validation_auc(ctx, params, cfg, rngs, epoch)
            entry = {"epoch": epoch, "val_auc": val_auc}
            if cfg.adversarial:
                entry["d_loss"] = float(np.mean(d_losses))
                entry["g_reward"] = float(np.mean(g_rewards))
            else:
                entry["joint_loss"] = float(np.mean(j_losses))
            history.append(entry)
            log.info("epoch %d: %s", epoch,
                     " ".join(f"{k}={v:.4f}" for k, v in entry.items() if k != "epoch"))

            improved = np.isfinite(val_auc) and val_auc > best["auc"]
            if improved:
                best.update(auc=float(val_auc), epoch=epoch,
                            struct=params.struct.copy(), words=params.words.copy())
            completed = epoch + 1
            if checkpoint_dir and cfg.checkpoint_every and \
                    completed % cfg.checkpoint_every == 0:
                save_checkpoint(checkpoint_dir, params, rngs, completed,
                                history, cfg, best)
            if cfg.early_stop and best["epoch"] >= 0 and \
                    epoch - best["epoch"] >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best["epoch"])
                break
    except NonFiniteError:
        if checkpoint_dir:
            save_checkpoint(os.path.join(checkpoint_dir, "diagnostic"),
                            params, rngs, -1, history, cfg, best,
                            allow_partial=True)
        raise
    # the final checkpoint holds the live state, so a resumed run continues
    # bit-exactly; the best-validation snapshot is restored only afterwards
    if checkpoint_dir:
        save_checkpoint(checkpoint_dir, params, rngs, completed, history,
                        cfg, best)
    if cfg.early_stop and best["struct"] is not None:
        params.struct[:] = best["struct"]
        params.words[:] = best["words"]
    ensure_finite(params.struct, "structure embeddings")
    ensure_finite(params.words, "word embeddings")
    return TrainResult(params, history, best["epoch"], best["auc"])


# ---------------------------------------------------------------------------
# final embedding aggregation
# ---------------------------------------------------------------------------

def expected_context_embedding(i: int, probs: np.ndarray, words: np.ndarray,
                               struct: np.ndarray, text: TextTensor,
                               acfg: AttentionConfig,
                               max_cost: int = 8_000_000) -> np.ndarray:
    """Probability-weighted average of z^t_{i|j} over the support of probs."""
    support = np.nonzero(probs > 0)[0]
    li = max(int(text.lengths[i]), 1)
    ids_i = text.ids[i, :li]
    ti = attention.embed_texts(words, ids_i)
    mask_i = text.mask[i, :li]
    out = np.zeros(struct.shape[1])
    lens_j = np.maximum(text.lengths[support], 1)
    order = np.argsort(lens_j, kind="stable")
    start = 0
    while start < len(order):
        stop, eff = start, 0
        while stop < len(order) and stop - start < 2048:
            cand = max(eff, int(lens_j[order[stop]]))
            if (stop - start + 1) * cand * li > max_cost and stop > start:
                break
            eff = cand
            stop += 1
        jj = support[order[start:stop]]
        zt = attention.forward_one_to_many(
            ti, mask_i, struct[i],
            attention.embed_texts(words, text.ids[jj, :eff]),
            text.mask[jj, :eff], struct[jj], acfg)
        out += probs[jj] @ zt
        start = stop
    return out


def aggregate_embeddings(text: TextTensor, params: ModelParams,
                         cfg: TrainConfig, rngs: RngFactory,
                         struct: np.ndarray | None = None,
                         active: np.ndarray | None = None,
                         nodes: np.ndarray | None = None,
                         degree_cdf: np.ndarray | None = None) -> np.ndarray:
    """Final per-node embeddings [z^s_i, E_{j ~ G(.|i)} z^t_{i|j}].

    The expectation is exact (full enumeration over the candidate set) up to
    cfg.exact_threshold nodes, Monte Carlo with cfg.agg_samples draws above.
    The first d coordinates always equal the structure embedding.
    """
    struct = params.struct if struct is None else struct
    n = struct.shape[0]
    nodes = np.arange(n) if nodes is None else np.asarray(nodes)
    cand = np.arange(n) if active is None else np.asarray(active)
    acfg = _attn_cfg(cfg)
    d = struct.shape[1]
    out = np.zeros((n, 2 * d))
    out[:, :d] = struct
    exact = len(cand) <= cfg.exact_threshold
    if exact:
        for i in nodes:
            probs = adv.gen_prob(int(i), struct, active)
            out[i, d:] = expected_context_embedding(int(i), probs, params.words,
                                                    struct, text, acfg,
                                                    cfg.max_chunk_cost)
        return out
    rng = rngs.stream("aggregate")
    S = cfg.agg_samples
    for start in range(0, len(nodes), 256):
        chunk = nodes[start:start + 256]
        rep = np.repeat(chunk, S)
        js = adv.gen_sample_rows(rep, struct, rng, active=active,
                                 degree_cdf=degree_cdf)
        pairs = np.stack([rep, js], axis=1)
        zt, _ = adv.context_batch_forward(pairs, params.words, struct, text,
                                          acfg, cfg.max_chunk_cost)
        out[chunk, d:] = zt.reshape(len(chunk), S, d).mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# checkpoints (atomic: every file is written to a temp name and renamed;
# state.json is written last and marks completion)
# ---------------------------------------------------------------------------

def save_checkpoint(ckpt_dir: str, params: ModelParams, rngs: RngFactory,
                    epoch: int, history: list, cfg: TrainConfig,
                    best: dict | None = None,
                    allow_partial: bool = False) -> None:
    """allow_partial skips tensors the binary format rejects (non-finite),
    recording them in the state file; used for diagnostic dumps on abort."""
    os.makedirs(ckpt_dir, exist_ok=True)
    skipped = []

    def put(name, mat):
        try:
            write_matrix(os.path.join(ckpt_dir, name), mat)
        except NonFiniteError:
            if not allow_partial:
                raise
            skipped.append(name)

    put("struct.mat", params.struct)
    put("words.mat", params.words)
    for name, state in (("struct", params.adam_struct), ("words", params.adam_words)):
        put(f"adam_{name}_m.mat", state.m)
        put(f"adam_{name}_v.mat", state.v)
    has_best = best is not None and best.get("struct") is not None
    if has_best:
        put("best_struct.mat", best["struct"])
        put("best_words.mat", best["words"])
    state = {
        "epoch": epoch,
        "history": history,
        "config": cfg.to_mapping(),
        "rng": rngs.get_state(),
        "adam_steps": {"struct": params.adam_struct.step,
                       "words": params.adam_words.step},
        "best": {"auc": best["auc"], "epoch": best["epoch"]} if has_best else None,
        "skipped_non_finite": skipped,
    }
    tmp = os.path.join(ckpt_dir, "state.json.tmp")
    with open(tmp, "w") as f:
        json.dump(state, f)
    os.replace(tmp, os.path.join(ckpt_dir, "state.json"))


def load_checkpoint(ckpt_dir: str):
    """Returns (params, rngs, epoch, history, cfg, best)."""
    with open(os.path.join(ckpt_dir, "state.json")) as f:
        state = json.load(f)
    cfg = TrainConfig.from_mapping(state["config"])
    params = ModelParams(
        read_matrix(os.path.join(ckpt_dir, "struct.mat")),
        read_matrix(os.path.join(ckpt_dir, "words.mat")),
        AdamState(read_matrix(os.path.join(ckpt_dir, "adam_struct_m.mat")),
                  read_matrix(os.path.join(ckpt_dir, "adam_struct_v.mat")),
                  state["adam_steps"]["struct"]),
        AdamState(read_matrix(os.path.join(ckpt_dir, "adam_words_m.mat")),
                  read_matrix(os.path.join(ckpt_dir, "adam_words_v.mat")),
                  state["adam_steps"]["words"]),
    )
    rngs = RngFactory(state["rng"]["seed"])
    rngs.set_state(state["rng"])
    best = {"auc": -1.0, "epoch": -1, "struct": None, "words": None}
    if state.get("best"):
        best.update(state["best"])
        best["struct"] = read_matrix(os.path.join(ckpt_dir, "best_struct.mat"))
        best["words"] = read_matrix(os.path.join(ckpt_dir, "best_words.mat"))
    return params, rngs, state["epoch"], state["history"], cfg, best
