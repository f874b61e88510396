"""Discriminator and generator of the adversarial embedding game.

The discriminator scores a node pair with the sigmoid of the dot product
of their context-aware text embeddings. The generator is a softmax over
structure-embedding similarities; its log-probability is approximated by
negative sampling with nodes drawn proportional to degree^(3/4), and its
updates use the policy-gradient estimator with the discriminator's
log(1 - D) as a constant reward.
"""

from __future__ import annotations

import numpy as np

from . import attention
from .attention import AttentionConfig, chunk_pairs_by_length
from .corpus import TextTensor
from .numerics import (RngStream, log_sigmoid, sample_from_cdf, sigmoid)


class AdvConfig:
    """Loss weights of the adversarial game.

    alpha1/alpha2 weight the discriminator's true-edge and generated-edge
    terms; alpha3 weights the generator's reward term and eta the
    supervised edge term. k_neg is the number of negative samples per edge
    in the log-generator approximation.
    """

    def __init__(self, k_neg=1, alpha1=1.0, alpha2=1.0, alpha3=1.0, eta=0.0):
        if k_neg < 0:
            raise ValueError("k_neg must be >= 0")
        for name, v in (("alpha1", alpha1), ("alpha2", alpha2),
                        ("alpha3", alpha3), ("eta", eta)):
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        self.k_neg = int(k_neg)
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.eta = eta


# ---------------------------------------------------------------------------
# discriminator
# ---------------------------------------------------------------------------

def disc_prob(zt_i: np.ndarray, zt_j: np.ndarray):
    """Probability of an edge from the pair's text embeddings.

    Clamped to the open interval so callers can take either log; the loss
    paths use log-sigmoid directly and never saturate.
    """
    dot = np.sum(np.asarray(zt_i) * np.asarray(zt_j), axis=-1)
    p = np.clip(np.exp(log_sigmoid(dot)), np.finfo(np.float64).tiny,
                np.nextafter(1.0, 0.0))
    return p if np.ndim(dot) else float(p)


def context_batch_forward(pairs: np.ndarray, words: np.ndarray,
                          struct: np.ndarray, text: TextTensor,
                          attn_cfg: AttentionConfig, max_cost: int = 8_000_000):
    """Context-aware embeddings for a list of pairs, evaluated in
    length-sorted chunks; returns (zt_i, zt_j) each (B, d)."""
    B = len(pairs)
    d = words.shape[1]
    zt_i = np.zeros((B, d))
    zt_j = np.zeros((B, d))
    for idx, eff in chunk_pairs_by_length(text.lengths[pairs[:, 0]],
                                          text.lengths[pairs[:, 1]],
                                          max_cost=max_cost):
        ii, jj = pairs[idx, 0], pairs[idx, 1]
        ids_i = text.ids[ii, :eff]
        ids_j = text.ids[jj, :eff]
        pair = attention.forward_pairs(
            attention.embed_texts(words, ids_i),
            attention.embed_texts(words, ids_j),
            text.mask[ii, :eff], text.mask[jj, :eff],
            struct[ii], struct[jj], attn_cfg)
        zt_i[idx] = pair.zt_i
        zt_j[idx] = pair.zt_j
    return zt_i, zt_j


def disc_loss_and_grad(pos_pairs: np.ndarray, neg_pairs: np.ndarray,
                       words: np.ndarray, struct: np.ndarray, text: TextTensor,
                       adv_cfg: AdvConfig, attn_cfg: AttentionConfig,
                       max_cost: int = 8_000_000):
    """Discriminator loss and word-embedding gradient for one mini-batch.

    Minimizes -(alpha1 * mean log D(pos) + alpha2 * mean log(1 - D(neg))).
    Structure embeddings are constants here; the gradient lands on the
    word-embedding table only.
    """
    if len(pos_pairs) == 0:
        raise ValueError("discriminator batch needs at least one positive pair")
    dW = np.zeros_like(words)
    if adv_cfg.alpha1 == 0.0 and adv_cfg.alpha2 == 0.0:
        return 0.0, dW

    all_pairs = np.concatenate([pos_pairs, neg_pairs]) if len(neg_pairs) \
        else np.asarray(pos_pairs)
    is_pos = np.zeros(len(all_pairs), dtype=bool)
    is_pos[:len(pos_pairs)] = True
    w_pos = adv_cfg.alpha1 / len(pos_pairs)
    w_neg = adv_cfg.alpha2 / max(len(neg_pairs), 1)

    loss = 0.0
    for idx, eff in chunk_pairs_by_length(text.lengths[all_pairs[:, 0]],
                                          text.lengths[all_pairs[:, 1]],
                                          max_cost=max_cost):
        ii, jj = all_pairs[idx, 0], all_pairs[idx, 1]
        ids_i = text.ids[ii, :eff]
        ids_j = text.ids[jj, :eff]
        pair = attention.forward_pairs(
            attention.embed_texts(words, ids_i),
            attention.embed_texts(words, ids_j),
            text.mask[ii, :eff], text.mask[jj, :eff],
            struct[ii], struct[jj], attn_cfg)
        dot = np.sum(pair.zt_i * pair.zt_j, axis=-1)
        prob = sigmoid(dot)
        pos = is_pos[idx]
        loss += -w_pos * log_sigmoid(dot[pos]).sum()
        loss += -w_neg * log_sigmoid(-dot[~pos]).sum()
        # d loss / d dot: -(w_pos)(1 - D) on positives, +(w_neg) D on negatives
        ddot = np.where(pos, -w_pos * (1.0 - prob), w_neg * prob)
        dzt_i = ddot[:, None] * pair.zt_j
        dzt_j = ddot[:, None] * pair.zt_i
        dti, dtj = attention.context_backward(pair, dzt_i, dzt_j)
        attention.scatter_text_grads(dti, ids_i, words.shape[0], out=dW)
        attention.scatter_text_grads(dtj, ids_j, words.shape[0], out=dW)
    return float(loss), dW


# ---------------------------------------------------------------------------
# generator distribution
# ---------------------------------------------------------------------------

def neighbor_softmax(logits: np.ndarray, self_mask: np.ndarray) -> np.ndarray:
    """Row-wise max-subtracted softmax with the masked (self) columns
    excluded from both the maximum and the normalization."""
    masked = np.where(self_mask, -np.inf, logits)
    shift = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - shift)
    e[self_mask] = 0.0
    return e / e.sum(axis=1, keepdims=True)


def gen_prob_rows(nodes: np.ndarray, struct: np.ndarray,
                  active: np.ndarray | None = None) -> np.ndarray:
    """Softmax over structure-embedding dot products, excluding each node
    itself; rows are full-length vectors with zeros outside the support."""
    n = struct.shape[0]
    if active is None:
        cand = np.arange(n)
    else:
        cand = np.asarray(active)
    logits = struct[np.asarray(nodes)] @ struct[cand].T      # (B, A)
    self_mask = cand[None, :] == np.asarray(nodes)[:, None]
    probs_active = neighbor_softmax(logits, self_mask)
    out = np.zeros((len(np.atleast_1d(nodes)), n))
    out[:, cand] = probs_active
    return out


def gen_prob(i: int, struct: np.ndarray, active=None) -> np.ndarray:
    """Full categorical distribution of likely neighbours of node i."""
    if struct.shape[0] < 2:
        raise ValueError("generator needs at least two nodes")
    return gen_prob_rows(np.array([i]), struct, active)[0]


EXACT_SOFTMAX_LIMIT = 16384


def gen_sample_rows(nodes: np.ndarray, struct: np.ndarray, rng: RngStream,
                    active: np.ndarray | None = None,
                    exact_limit: int = EXACT_SOFTMAX_LIMIT,
                    degree_cdf: np.ndarray | None = None,
                    proposal_pool: int = 1024) -> np.ndarray:
    """Draw one generator sample per node via inverse CDF on the exact
    softmax, falling back to a two-stage importance-resampling scheme
    (uniform + degree^(3/4) mixture proposal) above `exact_limit` nodes."""
    nodes = np.asarray(nodes)
    n = struct.shape[0]
    cand = np.arange(n) if active is None else np.asarray(active)
    if len(cand) <= exact_limit:
        probs = gen_prob_rows(nodes, struct, active)[:, cand]
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(len(nodes)) * cdf[:, -1]
        idx = np.array([np.searchsorted(cdf[b], u[b], side="right")
                        for b in range(len(nodes))])
        return cand[np.minimum(idx, len(cand) - 1)]
    if degree_cdf is None:
        raise ValueError("large-graph sampling needs a degree CDF proposal")
    out = np.empty(len(nodes), dtype=np.int64)
    half = proposal_pool // 2
    deg_total = degree_cdf[-1]
    deg_w = np.diff(degree_cdf, prepend=0.0)
    for b, i in enumerate(nodes):
        uni = cand[rng.integers(0, len(cand), size=half)]
        deg = sample_from_cdf(degree_cdf, rng, size=proposal_pool - half)
        pool = np.concatenate([uni, deg])
        pool = pool[pool != i]
        q = 0.5 / len(cand) + 0.5 * deg_w[pool] / deg_total
        logits = struct[pool] @ struct[i]
        w = np.exp(logits - logits.max()) / q
        w /= w.sum()
        cdf = np.cumsum(w)
        k = np.searchsorted(cdf, rng.random() * cdf[-1], side="right")
        out[b] = pool[min(k, len(pool) - 1)]
    return out


def gen_sample(i: int, struct: np.ndarray, rng: RngStream, **kwargs) -> int:
    return int(gen_sample_rows(np.array([i]), struct, rng, **kwargs)[0])


# ---------------------------------------------------------------------------
# negative-sampling approximation of log G and its gradients
# ---------------------------------------------------------------------------

def log_gen_ns_given(i: int, j: int, negs: np.ndarray, struct: np.ndarray):
    """Negative-sampling estimate of log G(j | i) with the negatives fixed.

    Returns (value, grads) with grads a dict of node -> d-vector covering
    exactly the touched rows.
    """
    zi, zj = struct[i], struct[j]
    dot = float(zi @ zj)
    value = log_sigmoid(dot)
    grads: dict[int, np.ndarray] = {}

    def add(node, vec):
        if node in grads:
            grads[node] = grads[node] + vec
        else:
            grads[node] = vec.copy()

    s = sigmoid(dot)
    add(j, (1.0 - s) * zi)
    add(i, (1.0 - s) * zj)
    for k in np.atleast_1d(negs):
        k = int(k)
        dk = float(struct[k] @ zi)
        value += log_sigmoid(-dk)
        sk = sigmoid(dk)
        add(k, -sk * zi)
        add(i, -sk * struct[k])
    return float(value), grads


def log_gen_ns(i: int, j: int, struct: np.ndarray, k_neg: int,
               rng: RngStream, degree_cdf: np.ndarray):
    """Sample k_neg negatives from the degree^(3/4) distribution and return
    (value, grads, negatives)."""
    negs = sample_from_cdf(degree_cdf, rng, size=k_neg) if k_neg else \
        np.zeros(0, dtype=np.int64)
    value, grads = log_gen_ns_given(i, j, negs, struct)
    return value, grads, negs


def accumulate_ns_grads(ii: np.ndarray, jj: np.ndarray, negs: np.ndarray,
                        struct: np.ndarray, coeff: np.ndarray,
                        out: np.ndarray) -> np.ndarray:
    """Add coeff_b * grad log G_ns(j_b | i_b) into `out` for a whole batch;
    returns the per-pair estimates."""
    zi = struct[ii]
    zj = struct[jj]
    dots = np.sum(zi * zj, axis=1)
    values = log_sigmoid(dots)
    g = coeff * (1.0 - sigmoid(dots))
    np.add.at(out, jj, g[:, None] * zi)
    np.add.at(out, ii, g[:, None] * zj)
    if negs.size:
        zk = struct[negs]                                    # (B, K, d)
        ndots = np.einsum("bd,bkd->bk", zi, zk)
        values = values + log_sigmoid(-ndots).sum(axis=1)
        gk = -coeff[:, None] * sigmoid(ndots)                # (B, K)
        np.add.at(out, negs.reshape(-1),
                  (gk[:, :, None] * zi[:, None, :]).reshape(-1, struct.shape[1]))
        np.add.at(out, ii, (gk[:, :, None] * zk).sum(axis=1))
    return values


def gen_logprob_grad_exact(i: int, j: int, struct: np.ndarray,
                           active: np.ndarray | None = None) -> np.ndarray:
    """Exact gradient of log G(j | i) through the full softmax; used as an
    oracle for the policy-gradient estimator on small graphs."""
    probs = gen_prob(i, struct, active)
    grad = np.zeros_like(struct)
    grad[j] += struct[i]
    grad -= probs[:, None] * struct[i][None, :]
    grad[i] += struct[j] - probs @ struct
    return grad


# ---------------------------------------------------------------------------
# policy gradient for the generator
# ---------------------------------------------------------------------------

def gen_policy_grad(nodes: np.ndarray, struct: np.ndarray, reward_fn,
                    neighbors: list, degree_cdf: np.ndarray,
                    adv_cfg: AdvConfig, rng_gen: RngStream, rng_neg: RngStream,
                    active: np.ndarray | None = None,
                    exact_limit: int = EXACT_SOFTMAX_LIMIT):
    """Gradient on the structure table for one generator mini-batch.

    Per node: sample a neighbour from the generator, take the constant
    reward log(1 - D) from `reward_fn`, and accumulate
    alpha3 * reward * grad log G plus the supervised term
    -eta * grad log G at a true neighbour (skipped when the node has no
    training neighbours). Both log G gradients use the negative-sampling
    approximation. Returns (grad, info).
    """
    nodes = np.asarray(nodes)
    B = len(nodes)
    grad = np.zeros_like(struct)
    info = {"mean_reward": 0.0, "surrogate": 0.0}
    if adv_cfg.alpha3 == 0.0 and adv_cfg.eta == 0.0:
        return grad, info

    j_gen = gen_sample_rows(nodes, struct, rng_gen, active=active,
                            exact_limit=exact_limit, degree_cdf=degree_cdf)
    rewards = np.asarray(reward_fn(nodes, j_gen))
    info["mean_reward"] = float(rewards.mean())

    surrogate = 0.0
    if adv_cfg.alpha3 != 0.0:
        negs = sample_from_cdf(degree_cdf, rng_neg, size=(B, adv_cfg.k_neg)) \
            if adv_cfg.k_neg else np.zeros((B, 0), dtype=np.int64)
        coeff = adv_cfg.alpha3 * rewards / B
        vals = accumulate_ns_grads(nodes, j_gen, negs, struct, coeff, grad)
        surrogate += float((coeff * vals).sum())

    if adv_cfg.eta != 0.0:
        picks = np.full(B, -1, dtype=np.int64)
        for b, i in enumerate(nodes):
            nbrs = neighbors[int(i)]
            if len(nbrs):
                picks[b] = nbrs[int(rng_gen.integers(0, len(nbrs)))]
        have = picks >= 0
        if np.any(have):
            negs = sample_from_cdf(degree_cdf, rng_neg,
                                   size=(int(have.sum()), adv_cfg.k_neg)) \
                if adv_cfg.k_neg else np.zeros((int(have.sum()), 0), dtype=np.int64)
            coeff = np.full(int(have.sum()), -adv_cfg.eta / B)
            vals = accumulate_ns_grads(nodes[have], picks[have], negs, struct,
                                       coeff, grad)
            surrogate += float((coeff * vals).sum())
    info["surrogate"] = surrogate
    return grad, info
