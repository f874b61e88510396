"""Context-aware text embeddings for node pairs.

Two attention mechanisms over a pair's embedded texts:

* mutual attention: the texts attend to each other through a masked,
  tanh-squashed affinity matrix, mean-pooled into per-word importance
  scores and normalized over real tokens;
* topological attention: each text attends to itself, scored by dot
  products with the pair's structure embeddings (self- and cross-
  interaction).

The combined embedding is a weighted sum of the three components. The
backward pass is hand-derived and emits gradients only for the embedded
word vectors; the structure embeddings entering topological attention are
treated as constants everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import masked_softmax, softmax_vjp


@dataclass
class AttentionConfig:
    """Component weights for the combined context-aware embedding.

    lam1 scales the mutual component, lam2 the self-interaction and lam3
    the cross-interaction (the two topological weights absorb their shared
    outer coefficient). (lam2, lam3) = (0, 0) is the mutual-only variant;
    lam1 = 0 is topological-only.
    """
    lam1: float = 1.0
    lam2: float = 1.0
    lam3: float = 1.0

    def validate(self) -> None:
        for name in ("lam1", "lam2", "lam3"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass
class ContextPair:
    """Forward artifacts for a batch of node pairs (leading axis = pair).

    Kept around so the backward pass can run without recomputation.
    """
    ti: np.ndarray              # (B, L, d) embedded text, i side
    tj: np.ndarray
    mask_i: np.ndarray          # (B, L)
    mask_j: np.ndarray
    zs_i: np.ndarray            # (B, d) structure embeddings (constants)
    zs_j: np.ndarray
    cfg: AttentionConfig
    masked_affinity: np.ndarray  # (B, L, L) tanh(A o M)
    imp_i: np.ndarray           # (B, L) importance scores c_{i|j}
    imp_j: np.ndarray
    beta_i: np.ndarray          # (B, L) mutual weights, masked simplex
    beta_j: np.ndarray
    zc1_i: np.ndarray           # (B, d) mutual component
    zc1_j: np.ndarray
    score_self_i: np.ndarray    # (B, L) tanh(t_i . zs_i)
    score_cross_i: np.ndarray   # (B, L) tanh(t_i . zs_j)
    score_self_j: np.ndarray
    score_cross_j: np.ndarray
    gamma_self_i: np.ndarray    # (B, L) topological weights
    gamma_cross_i: np.ndarray
    gamma_self_j: np.ndarray
    gamma_cross_j: np.ndarray
    z_self_i: np.ndarray        # (B, d)
    z_cross_i: np.ndarray
    z_self_j: np.ndarray
    z_cross_j: np.ndarray
    zt_i: np.ndarray            # (B, d) combined output z^t_{i|j}
    zt_j: np.ndarray            # (B, d) combined output z^t_{j|i}


def _check_masks(mask_i, mask_j):
    if not np.all(mask_i.sum(axis=-1) > 0) or not np.all(mask_j.sum(axis=-1) > 0):
        raise ValueError("attention requires at least one real token per side")


def _topo_side(t, mask, zs):
    """Masked attention of one text over itself scored by one structure
    embedding; returns (tanh scores, weights, pooled vector)."""
    score = np.tanh(np.einsum("bld,bd->bl", t, zs))
    gamma = masked_softmax(score, mask)
    pooled = np.einsum("bl,bld->bd", gamma, t)
    return score, gamma, pooled


def forward_pairs(ti, tj, mask_i, mask_j, zs_i, zs_j, cfg: AttentionConfig) -> ContextPair:
    """Batched forward pass for pairs; all arrays carry a leading batch axis."""
    _check_masks(mask_i, mask_j)
    count_i = mask_i.sum(axis=-1)            # (B,)
    count_j = mask_j.sum(axis=-1)

    # in place: mask both axes, then tanh; identical values, no temporaries
    masked_aff = np.matmul(ti, tj.transpose(0, 2, 1))
    masked_aff *= mask_i[:, :, None]
    masked_aff *= mask_j[:, None, :]
    np.tanh(masked_aff, out=masked_aff)

    imp_i = masked_aff.sum(axis=2) / count_j[:, None]            # row mean pool
    imp_j = masked_aff.sum(axis=1) / count_i[:, None]            # col mean pool
    beta_i = masked_softmax(imp_i, mask_i)
    beta_j = masked_softmax(imp_j, mask_j)
    zc1_i = np.einsum("bl,bld->bd", beta_i, ti)
    zc1_j = np.einsum("bl,bld->bd", beta_j, tj)

    score_self_i, gamma_self_i, z_self_i = _topo_side(ti, mask_i, zs_i)
    score_cross_i, gamma_cross_i, z_cross_i = _topo_side(ti, mask_i, zs_j)
    score_self_j, gamma_self_j, z_self_j = _topo_side(tj, mask_j, zs_j)
    score_cross_j, gamma_cross_j, z_cross_j = _topo_side(tj, mask_j, zs_i)

    zt_i = cfg.lam1 * zc1_i + cfg.lam2 * z_self_i + cfg.lam3 * z_cross_i
    zt_j = cfg.lam1 * zc1_j + cfg.lam2 * z_self_j + cfg.lam3 * z_cross_j

    return ContextPair(ti, tj, mask_i, mask_j, zs_i, zs_j, cfg,
                       masked_aff, imp_i, imp_j, beta_i, beta_j, zc1_i, zc1_j,
                       score_self_i, score_cross_i, score_self_j, score_cross_j,
                       gamma_self_i, gamma_cross_i, gamma_self_j, gamma_cross_j,
                       z_self_i, z_cross_i, z_self_j, z_cross_j, zt_i, zt_j)


def _topo_backward(dz, t, score, gamma, zs):
    """Gradient of one topological component w.r.t. its text matrix."""
    dt = gamma[:, :, None] * dz[:, None, :]
    dgamma = np.einsum("bld,bd->bl", t, dz)
    dscore = softmax_vjp(gamma, dgamma)
    draw = dscore * (1.0 - score * score)     # tanh'
    dt += draw[:, :, None] * zs[:, None, :]
    return dt


def context_backward(pair: ContextPair, grad_zt_i: np.ndarray,
                     grad_zt_j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate upstream gradients on (z^t_{i|j}, z^t_{j|i}) to the
    embedded text matrices. Structure embeddings receive no gradient, and
    padded rows come out exactly zero.
    """
    cfg = pair.cfg
    B, L, d = pair.ti.shape
    dti = np.zeros_like(pair.ti)
    dtj = np.zeros_like(pair.tj)

    if cfg.lam1 != 0.0:
        dzc1_i = cfg.lam1 * grad_zt_i
        dzc1_j = cfg.lam1 * grad_zt_j
        dti += pair.beta_i[:, :, None] * dzc1_i[:, None, :]
        dtj += pair.beta_j[:, :, None] * dzc1_j[:, None, :]
        dbeta_i = np.einsum("bld,bd->bl", pair.ti, dzc1_i)
        dbeta_j = np.einsum("bld,bd->bl", pair.tj, dzc1_j)
        dimp_i = softmax_vjp(pair.beta_i, dbeta_i)
        dimp_j = softmax_vjp(pair.beta_j, dbeta_j)
        count_i = pair.mask_i.sum(axis=-1)
        count_j = pair.mask_j.sum(axis=-1)
        # daff = (dimp_i/|j| + dimp_j/|i|) * tanh' * masks, built in place
        daff = np.multiply(pair.masked_affinity, pair.masked_affinity)
        np.subtract(1.0, daff, out=daff)
        daff *= pair.mask_i[:, :, None]
        daff *= pair.mask_j[:, None, :]
        dmasked = np.add((dimp_i / count_j[:, None])[:, :, None],
                         (dimp_j / count_i[:, None])[:, None, :])
        daff *= dmasked
        dti += np.matmul(daff, pair.tj)
        dtj += np.matmul(daff.transpose(0, 2, 1), pair.ti)

    if cfg.lam2 != 0.0:
        dti += _topo_backward(cfg.lam2 * grad_zt_i, pair.ti,
                              pair.score_self_i, pair.gamma_self_i, pair.zs_i)
        dtj += _topo_backward(cfg.lam2 * grad_zt_j, pair.tj,
                              pair.score_self_j, pair.gamma_self_j, pair.zs_j)
    if cfg.lam3 != 0.0:
        dti += _topo_backward(cfg.lam3 * grad_zt_i, pair.ti,
                              pair.score_cross_i, pair.gamma_cross_i, pair.zs_j)
        dtj += _topo_backward(cfg.lam3 * grad_zt_j, pair.tj,
                              pair.score_cross_j, pair.gamma_cross_j, pair.zs_i)
    return dti, dtj


# ---------------------------------------------------------------------------
# single-pair surface (thin wrappers over the batched core)
# ---------------------------------------------------------------------------

def mutual_attention(ti, tj, mask_i, mask_j):
    """Mutual attention for a single pair of embedded texts (L x d).

    Returns (beta_{i|j}, beta_{j|i}, z^{c1}_{i|j}, z^{c1}_{j|i}).
    """
    pair = forward_pairs(ti[None], tj[None], mask_i[None], mask_j[None],
                         np.zeros((1, ti.shape[1])), np.zeros((1, ti.shape[1])),
                         AttentionConfig(1.0, 0.0, 0.0))
    return pair.beta_i[0], pair.beta_j[0], pair.zc1_i[0], pair.zc1_j[0]


def topological_attention(ti, mask_i, zs_i, zs_j):
    """Self- and cross-interaction components for one side of a pair."""
    if not np.all(np.asarray(mask_i).sum(-1) > 0):
        raise ValueError("attention requires at least one real token")
    _, _, z_self = _topo_side(ti[None], mask_i[None], np.asarray(zs_i)[None])
    _, _, z_cross = _topo_side(ti[None], mask_i[None], np.asarray(zs_j)[None])
    return z_self[0], z_cross[0]


def combine_context(zc1, z_self, z_cross, cfg: AttentionConfig):
    """Weighted combination of the three context components."""
    return cfg.lam1 * np.asarray(zc1) + cfg.lam2 * np.asarray(z_self) \
        + cfg.lam3 * np.asarray(z_cross)


def forward_one_to_many(ti, mask_i, zs_i, tj, mask_j, zs_j,
                        cfg: AttentionConfig) -> np.ndarray:
    """z^t_{i|j} for one shared node i against a batch of partners j.

    Mathematically identical to forward_pairs with a replicated i side but
    arranged as large 2-D products, which is what the final-embedding
    expectation (one node against every candidate) needs. Only the i-side
    output is computed.
    """
    if mask_i.sum() <= 0 or not np.all(mask_j.sum(axis=-1) > 0):
        raise ValueError("attention requires at least one real token per side")
    B, L2, d = tj.shape
    Li = ti.shape[0]
    count_j = mask_j.sum(axis=-1)                        # (B,)

    aff = (tj.reshape(B * L2, d) @ ti.T).reshape(B, L2, Li)
    aff *= mask_j[:, :, None]
    aff *= mask_i[None, None, :]
    np.tanh(aff, out=aff)
    imp_i = aff.sum(axis=1) / count_j[:, None]           # (B, Li)
    beta_i = masked_softmax(imp_i, np.broadcast_to(mask_i, (B, Li)))
    zt = cfg.lam1 * (beta_i @ ti)

    if cfg.lam2 != 0.0:
        score = np.tanh(ti @ zs_i)
        gamma = masked_softmax(score, mask_i)
        zt += cfg.lam2 * (gamma @ ti)[None, :]
    if cfg.lam3 != 0.0:
        scores = np.tanh(zs_j @ ti.T)                    # (B, Li)
        gamma = masked_softmax(scores, np.broadcast_to(mask_i, (B, Li)))
        zt += cfg.lam3 * (gamma @ ti)
    return zt


# ---------------------------------------------------------------------------
# vocabulary lookup and scatter
# ---------------------------------------------------------------------------

def embed_texts(word_emb: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Row lookup; pad positions pick up the frozen all-zero pad row."""
    return word_emb[ids]

def scatter_text_grads(dt: np.ndarray, ids: np.ndarray, vocab_size: int,
                       out: np.ndarray | None = None) -> np.ndarray:
    """Accumulate per-position gradients into word-embedding rows.

    The pad row is forced to zero afterwards, so pad embeddings never move.
    """
    d = dt.shape[-1]
    flat_ids = np.ascontiguousarray(ids).reshape(-1)
    flat = dt.reshape(-1, d)
    if out is None:
        out = np.zeros((vocab_size, d))
    for k in range(d):
        out[:, k] += np.bincount(flat_ids, weights=flat[:, k], minlength=vocab_size)
    out[0] = 0.0
    return out


# ---------------------------------------------------------------------------
# length-sorted chunking: exact under masking, much cheaper than padding
# every pair to the global maximum length
# ---------------------------------------------------------------------------

def chunk_pairs_by_length(len_i: np.ndarray, len_j: np.ndarray,
                          max_cost: int = 8_000_000, max_pairs: int = 256):
    """Group pair indices so each chunk's (pairs x L^2) affinity tensor stays
    within a memory budget; sorting by effective length keeps short texts
    from being padded up to the longest in the batch.

    Yields (index_array, effective_length) with a deterministic order.
    """
    eff = np.maximum(np.maximum(len_i, len_j), 1)
    order = np.argsort(eff, kind="stable")
    start = 0
    n = len(order)
    while start < n:
        stop = start
        cur_len = 0
        while stop < n and stop - start < max_pairs:
            cand_len = max(cur_len, int(eff[order[stop]]))
            if (stop - start + 1) * cand_len * cand_len > max_cost and stop > start:
                break
            cur_len = cand_len
            stop += 1
        yield order[start:stop], cur_len
        start = stop
