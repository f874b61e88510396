"""Unseen-node embedding learning.

A convolutional mapper is fit on seen nodes to regress structure
embeddings from text; its outputs initialize the structure embeddings of
unseen nodes, which are then refined by policy-gradient post-training
against the frozen discriminator with the mapper output as a quadratic
anchor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import adversarial as adv
from .attention import AttentionConfig
from .config import TrainConfig
from .corpus import TextTensor
from .numerics import (AdamState, RngFactory, RngStream, adam_step,
                       log_sigmoid, sample_from_cdf)

log = logging.getLogger(__name__)


@dataclass
class MapperParams:
    conv: np.ndarray    # (d_out, window, d_in) convolution filter
    bias: np.ndarray    # (d_out,)
    proj1: np.ndarray   # (d, d)
    proj2: np.ndarray   # (d, d)
    adam: dict | None = None

    @classmethod
    def init(cls, dim: int, window: int, rng: RngStream) -> "MapperParams":
        scale = (1.0 / (window * dim)) ** 0.5
        conv = rng.uniform(-scale, scale, (dim, window, dim))
        bias = np.zeros(dim)
        s = (1.0 / dim) ** 0.5
        proj1 = rng.uniform(-s, s, (dim, dim))
        proj2 = rng.uniform(-s, s, (dim, dim))
        mp = cls(conv, bias, proj1, proj2)
        mp.adam = {name: AdamState.for_param(getattr(mp, name))
                   for name in ("conv", "bias", "proj1", "proj2")}
        return mp


@dataclass
class _MapperCache:
    wv: np.ndarray        # (B, L, d) word vectors
    x: np.ndarray         # (B, nw, d) convolution outputs
    argmax: np.ndarray    # (B, d) pooled window index
    pooled: np.ndarray
    h0: np.ndarray        # relu(pooled)
    h1: np.ndarray        # h0 @ P1^T
    out: np.ndarray


def _mapper_forward_cached(ids: np.ndarray, words: np.ndarray,
                           mp: MapperParams) -> _MapperCache:
    wv = words[ids]                                   # (B, L, d)
    B, L, d = wv.shape
    window = mp.conv.shape[1]
    if L < window:
        pad = np.zeros((B, window - L, d))
        wv = np.concatenate([wv, pad], axis=1)
        L = window
    nw = L - window + 1
    x = np.broadcast_to(mp.bias, (B, nw, mp.bias.shape[0])).copy()
    for o in range(window):
        x += wv[:, o:o + nw, :] @ mp.conv[:, o, :].T
    argmax = x.argmax(axis=1)                         # (B, d)
    pooled = np.take_along_axis(x, argmax[:, None, :], axis=1)[:, 0, :]
    h0 = np.maximum(pooled, 0.0)
    h1 = h0 @ mp.proj1.T
    out = np.maximum(h1, 0.0) @ mp.proj2.T
    return _MapperCache(wv, x, argmax, pooled, h0, h1, out)


def mapper_forward(ids: np.ndarray, words: np.ndarray, mp: MapperParams) -> np.ndarray:
    """Map padded token ids to a structure-embedding-sized vector; pad
    positions contribute zero word vectors."""
    single = ids.ndim == 1
    cache = _mapper_forward_cached(ids[None] if single else ids, words, mp)
    return cache.out[0] if single else cache.out


def _mapper_backward(cache: _MapperCache, dout: np.ndarray, mp: MapperParams):
    """Gradients of the mapper parameters; word vectors are frozen."""
    h1r = np.maximum(cache.h1, 0.0)
    dproj2 = dout.T @ h1r
    dh1 = (dout @ mp.proj2) * (cache.h1 > 0)
    dproj1 = dh1.T @ cache.h0
    dh0 = dh1 @ mp.proj1
    dpooled = dh0 * (cache.pooled > 0)
    B, nw, d = cache.x.shape
    dx = np.zeros_like(cache.x)
    np.put_along_axis(dx, cache.argmax[:, None, :], dpooled[:, None, :], axis=1)
    window = mp.conv.shape[1]
    dconv = np.zeros_like(mp.conv)
    for o in range(window):
        dconv[:, o, :] = np.einsum("bjo,bji->oi", dx, cache.wv[:, o:o + nw, :])
    dbias = dx.sum(axis=(0, 1))
    return {"conv": dconv, "bias": dbias, "proj1": dproj1, "proj2": dproj2}


def fit_mapper(seen: np.ndarray, struct: np.ndarray, words: np.ndarray,
               text: TextTensor, cfg: TrainConfig, rngs: RngFactory):
    """Minimize the mean squared error between mapper outputs and the
    trained structure embeddings of seen nodes. Word embeddings stay
    frozen. Returns (MapperParams, per-epoch losses)."""
    rng = rngs.stream("mapper")
    mp = MapperParams.init(cfg.dim, cfg.mapper_window, rng)
    seen = np.asarray(seen)
    batch = min(cfg.mapper_batch, len(seen))
    history = []
    for _ in range(cfg.mapper_epochs):
        order = rng.permutation(len(seen))
        total, count = 0.0, 0
        for start in range(0, len(seen), batch):
            nodes = seen[order[start:start + batch]]
            cache = _mapper_forward_cached(text.ids[nodes], words, mp)
            diff = cache.out - struct[nodes]
            loss = float((diff * diff).sum(axis=1).mean())
            grads = _mapper_backward(cache, 2.0 * diff / len(nodes), mp)
            for name, g in grads.items():
                adam_step(getattr(mp, name), g, mp.adam[name], cfg.lr)
            total += loss * len(nodes)
            count += len(nodes)
        history.append(total / count)
    log.info("mapper fit: loss %.5f -> %.5f", history[0], history[-1])
    return mp, history


def mapper_loss_and_grads(nodes: np.ndarray, targets: np.ndarray,
                          words: np.ndarray, text: TextTensor,
                          mp: MapperParams):
    """Mean squared error on a node batch plus parameter gradients
    (exposed for gradient checking)."""
    cache = _mapper_forward_cached(text.ids[nodes], words, mp)
    diff = cache.out - targets
    loss = float((diff * diff).sum(axis=1).mean())
    grads = _mapper_backward(cache, 2.0 * diff / len(nodes), mp)
    return loss, grads


# ---------------------------------------------------------------------------
# post-training of unseen-node structure embeddings
# ---------------------------------------------------------------------------

@dataclass
class UnseenState:
    unseen: np.ndarray          # node ids being learned
    struct: np.ndarray          # full table; unseen rows mutable, rest frozen
    mapper_targets: np.ndarray  # (n_unseen, d) frozen MLP(t_i)
    words: np.ndarray           # frozen
    degree_cdf: np.ndarray      # training-split degrees (seen nodes only)
    lambda_reg: float


def init_unseen_state(unseen: np.ndarray, struct_seen: np.ndarray,
                      words: np.ndarray, text: TextTensor, mp: MapperParams,
                      degree_cdf: np.ndarray, lambda_reg: float) -> UnseenState:
    """Combined structure table with unseen rows initialized to the mapper
    outputs (bit-exactly: the rows are the MLP forward results)."""
    unseen = np.sort(np.asarray(unseen))
    struct = struct_seen.copy()
    targets = mapper_forward(text.ids[unseen], words, mp)
    struct[unseen] = targets
    return UnseenState(unseen, struct, targets, words, degree_cdf, lambda_reg)


def regularizer_grad(state: UnseenState) -> np.ndarray:
    """Closed form: 2 * lambda_reg * (z - MLP(t)) on the unseen rows."""
    return 2.0 * state.lambda_reg * (state.struct[state.unseen]
                                     - state.mapper_targets)


def posttrain_unseen(state: UnseenState, text: TextTensor, cfg: TrainConfig,
                     rngs: RngFactory) -> np.ndarray:
    """Policy-gradient refinement of unseen structure embeddings.

    Per unseen node: sample a partner from the generator over the combined
    node set, take reward log(1 - D) from the frozen discriminator, and
    descend reward * grad log G plus the mapper-anchored quadratic
    regularizer. Only unseen rows move."""
    if len(state.unseen) == 0:
        return state.struct[state.unseen]
    acfg = AttentionConfig(cfg.lam1, cfg.lam2, cfg.lam3)
    unseen_mask = np.zeros(state.struct.shape[0], dtype=bool)
    unseen_mask[state.unseen] = True
    adam = AdamState.for_param(state.struct)
    rng = rngs.stream("posttrain")

    def reward(ii, jj):
        pairs = np.stack([jj, ii], axis=1)
        zt_j, zt_i = adv.context_batch_forward(pairs, state.words, state.struct,
                                               text, acfg, cfg.max_chunk_cost)
        return log_sigmoid(-np.sum(zt_i * zt_j, axis=1))

    for _ in range(cfg.posttrain_epochs):
        order = rng.permutation(len(state.unseen))
        for start in range(0, len(order), cfg.posttrain_batch):
            nodes = state.unseen[order[start:start + cfg.posttrain_batch]]
            j_gen = adv.gen_sample_rows(nodes, state.struct,
                                        rngs.stream("posttrain_sample"))
            r = reward(nodes, j_gen)
            negs = sample_from_cdf(state.degree_cdf,
                                   rngs.stream("posttrain_negatives"),
                                   size=(len(nodes), cfg.k_neg)) \
                if cfg.k_neg else np.zeros((len(nodes), 0), dtype=np.int64)
            grad = np.zeros_like(state.struct)
            coeff = r / len(nodes)
            adv.accumulate_ns_grads(nodes, j_gen, negs, state.struct, coeff, grad)
            grad[~unseen_mask] = 0.0
            grad[nodes] += 2.0 * state.lambda_reg * \
                (state.struct[nodes] - state.mapper_targets[
                    np.searchsorted(state.unseen, nodes)]) / len(nodes)
            adam_step(state.struct, grad, adam, cfg.lr)
    return state.struct[state.unseen]
