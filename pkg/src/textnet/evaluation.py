"""Downstream evaluation: AUC link prediction against sampled fake edges,
and macro-F1 node classification with a built-in one-vs-rest logistic
regression classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import AdamState, RngFactory, RngStream, adam_step, sigmoid


def gen_fake_edges(test_edges: np.ndarray, edge_set: set, n_nodes: int,
                   rng: RngStream, candidates: np.ndarray | None = None,
                   max_tries: int = 100) -> np.ndarray:
    """One fake edge per test edge: a fair coin picks source or target and
    replaces it with a uniformly random node, resampling (up to max_tries)
    while the result is a real edge or a self-loop."""
    cand = np.arange(n_nodes) if candidates is None else np.asarray(candidates)
    fakes = np.empty((len(test_edges), 2), dtype=np.int64)
    for row, (u, v) in enumerate(np.asarray(test_edges)):
        for attempt in range(max_tries + 1):
            if attempt == max_tries:
                raise RuntimeError("could not sample a fake edge in "
                                   f"{max_tries} tries for ({u}, {v})")
            a, b = int(u), int(v)
            replace_src = rng.random() < 0.5
            repl = int(cand[int(rng.integers(0, len(cand)))])
            if replace_src:
                a = repl
            else:
                b = repl
            if a == b or (min(a, b), max(a, b)) in edge_set:
                continue
            fakes[row] = (a, b)
            break
    return fakes


def auc_score(pos_scores, neg_scores) -> float:
    """Probability that a positive outranks a negative, ties counted half;
    computed by rank sums in O(n log n)."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("auc_score needs non-empty score lists")
    both = np.concatenate([pos, neg])
    order = np.argsort(both, kind="mergesort")
    ranks = np.empty(len(both))
    sorted_vals = both[order]
    # average ranks over tied runs
    i = 0
    while i < len(both):
        j = i
        while j + 1 < len(both) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[:len(pos)].sum()
    return float((rank_sum - len(pos) * (len(pos) + 1) / 2.0)
                 / (len(pos) * len(neg)))


@dataclass
class LinkEvalReport:
    aucs: list                 # one AUC per repetition
    mean: float
    std: float
    ratio: float
    seed: int
    mode: str
    repetitions: int = field(default=0)

    @classmethod
    def from_aucs(cls, aucs, ratio, seed, mode):
        arr = np.asarray(aucs, dtype=np.float64)
        return cls([float(a) for a in arr], float(arr.mean()),
                   float(arr.std()), ratio, seed, mode, len(arr))


def link_prediction_eval(embeddings: np.ndarray, test_edges: np.ndarray,
                         edge_set: set, n_nodes: int, rngs: RngFactory,
                         repetitions: int = 10, ratio: float = 0.0,
                         mode: str = "", candidates=None) -> LinkEvalReport:
    """Score pairs by the inner product of their aggregated embeddings;
    each repetition draws fresh fake edges from its own substream."""
    test_edges = np.asarray(test_edges)
    if len(test_edges) == 0:
        raise ValueError("link prediction needs a non-empty test set")
    if test_edges.max() >= embeddings.shape[0]:
        raise ValueError("test edge endpoint without an embedding row")
    pos = np.sum(embeddings[test_edges[:, 0]] * embeddings[test_edges[:, 1]],
                 axis=1)
    aucs = []
    for rep in range(repetitions):
        fakes = gen_fake_edges(test_edges, edge_set, n_nodes,
                               rngs.stream("fake_edges", rep),
                               candidates=candidates)
        neg = np.sum(embeddings[fakes[:, 0]] * embeddings[fakes[:, 1]], axis=1)
        aucs.append(auc_score(pos, neg))
    return LinkEvalReport.from_aucs(aucs, ratio, rngs.seed, mode)


# ---------------------------------------------------------------------------
# node classification
# ---------------------------------------------------------------------------

def f1_macro(pred, true, n_classes: int) -> float:
    """Unweighted mean of per-class F1; a class with no predicted and no
    true positives scores 0 for that class."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ValueError("prediction/label length mismatch")
    total = 0.0
    for c in range(n_classes):
        tp = float(np.sum((pred == c) & (true == c)))
        fp = float(np.sum((pred == c) & (true != c)))
        fn = float(np.sum((pred != c) & (true == c)))
        denom = 2 * tp + fp + fn
        total += (2 * tp / denom) if denom > 0 else 0.0
    return total / n_classes


def train_logreg_ovr(features: np.ndarray, labels: np.ndarray, n_classes: int,
                     l2: float = 1e-4, epochs: int = 200, lr: float = 0.05):
    """One-vs-rest logistic regression, full-batch Adam, deterministic
    zero initialization. Returns (weights (C, D), biases (C,))."""
    n, d = features.shape
    weights = np.zeros((n_classes, d))
    biases = np.zeros(n_classes)
    targets = np.zeros((n, n_classes))
    targets[np.arange(n), labels] = 1.0
    aw = AdamState.for_param(weights)
    ab = AdamState.for_param(biases)
    for _ in range(epochs):
        logits = features @ weights.T + biases
        probs = sigmoid(logits)
        err = (probs - targets) / n
        gw = err.T @ features + l2 * weights
        gb = err.sum(axis=0)
        adam_step(weights, gw, aw, lr)
        adam_step(biases, gb, ab, lr)
    return weights, biases


def predict_logreg(features: np.ndarray, weights: np.ndarray,
                   biases: np.ndarray) -> np.ndarray:
    return np.argmax(features @ weights.T + biases, axis=1)


@dataclass
class ClassifyReport:
    f1_scores: list
    mean: float
    std: float
    labeled_ratio: float
    seed: int
    repetitions: int = 0

    @classmethod
    def from_scores(cls, scores, labeled_ratio, seed):
        arr = np.asarray(scores, dtype=np.float64)
        return cls([float(s) for s in arr], float(arr.mean()),
                   float(arr.std()), labeled_ratio, seed, len(arr))


def classify_nodes(embeddings: np.ndarray, labels: np.ndarray,
                   labeled_ratio: float, rngs: RngFactory,
                   repetitions: int = 10, max_resample: int = 20) -> ClassifyReport:
    """Per repetition: a random labeled/unlabeled split at the given ratio,
    classifier trained on the labeled rows, macro-F1 on the rest. A split
    that misses a class in training is redrawn (up to max_resample)."""
    labeled_nodes = np.nonzero(np.asarray(labels) >= 0)[0]
    if len(labeled_nodes) == 0:
        raise ValueError("no labeled nodes")
    y_all = np.asarray(labels)
    n_classes = int(y_all.max()) + 1
    n_train = max(1, int(round(labeled_ratio / 100.0 * len(labeled_nodes))))
    scores = []
    for rep in range(repetitions):
        rng = rngs.stream("classify", rep)
        for attempt in range(max_resample + 1):
            if attempt == max_resample:
                raise RuntimeError("could not draw a split covering all classes")
            perm = rng.permutation(len(labeled_nodes))
            train_nodes = labeled_nodes[perm[:n_train]]
            test_nodes = labeled_nodes[perm[n_train:]]
            if len(test_nodes) == 0:
                raise ValueError("labeled ratio leaves no evaluation nodes")
            if len(np.unique(y_all[train_nodes])) == n_classes:
                break
        w, b = train_logreg_ovr(embeddings[train_nodes], y_all[train_nodes],
                                n_classes)
        pred = predict_logreg(embeddings[test_nodes], w, b)
        scores.append(f1_macro(pred, y_all[test_nodes], n_classes))
    return ClassifyReport.from_scores(scores, labeled_ratio, rngs.seed)
