"""Graph + text ingestion: edge lists, node texts, labels, vocabulary,
padding/masking, and reproducible edge / unseen-node splits.

Node ids in the input files may be arbitrary strings; a dense 0-based
reindexing table is built at load time and persisted with the artifacts.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

log = logging.getLogger(__name__)

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

PAD_ID = 0
PAD_TOKEN = "<pad>"


class ParseError(ValueError):
    """Malformed input file; message carries file name and line number."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass
class TextualGraph:
    node_count: int
    edges: np.ndarray              # (m, 2) int64, u < v, deduplicated
    texts: list                    # per node: list of token strings
    node_ids: list                 # internal index -> original id string
    labels: np.ndarray | None = None       # (n,) int64 class ids, -1 = unlabeled
    label_names: list = field(default_factory=list)
    self_loops_dropped: int = 0
    duplicates_dropped: int = 0

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        if len(self.edges):
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def validate(self) -> None:
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= self.node_count:
                raise ValueError("edge endpoint out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-loop present after load")
            key = self.edges[:, 0] * self.node_count + self.edges[:, 1]
            if len(np.unique(key)) != len(key):
                raise ValueError("duplicate edge present after load")
        if len(self.texts) != self.node_count:
            raise ValueError("texts entry count disagrees with node_count")


def _read_lines(path: str):
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def load_graph(edge_path: str, text_path: str, label_path: str | None = None) -> TextualGraph:
    """Load and validate a textual graph.

    The node universe is defined by the edge file; ids in the text or label
    file that never appear in an edge are an error. Nodes missing from the
    text file keep an empty token sequence. Self-loops are dropped and
    duplicate undirected edges rejected, both with counted warnings.
    """
    index: dict[str, int] = {}
    node_ids: list[str] = []

    def intern(raw_id: str) -> int:
        if raw_id not in index:
            index[raw_id] = len(node_ids)
            node_ids.append(raw_id)
        return index[raw_id]

    edges = []
    seen = set()
    self_loops = 0
    duplicates = 0
    for lineno, line in _read_lines(edge_path):
        parts = line.split("#", 1)[0].split()
        if len(parts) != 2:
            raise ParseError(f"{edge_path}:{lineno}: expected two node ids, got {line!r}")
        u, v = intern(parts[0]), intern(parts[1])
        if u == v:
            self_loops += 1
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        edges.append(key)
    if self_loops:
        log.warning("%s: dropped %d self-loop(s)", edge_path, self_loops)
    if duplicates:
        log.warning("%s: rejected %d duplicate edge(s)", edge_path, duplicates)

    n = len(node_ids)
    texts: list = [[] for _ in range(n)]
    for lineno, line in _read_lines(text_path):
        if "\t" not in line:
            raise ParseError(f"{text_path}:{lineno}: expected 'node_id<TAB>text'")
        raw_id, text = line.split("\t", 1)
        if raw_id not in index:
            raise ParseError(f"{text_path}:{lineno}: unknown node id {raw_id!r}")
        texts[index[raw_id]] = tokenize(text)

    labels = None
    label_names: list[str] = []
    if label_path is not None:
        labels = np.full(n, -1, dtype=np.int64)
        name_to_id: dict[str, int] = {}
        for lineno, line in _read_lines(label_path):
            if "\t" not in line:
                raise ParseError(f"{label_path}:{lineno}: expected 'node_id<TAB>label'")
            raw_id, name = line.split("\t", 1)
            if raw_id not in index:
                raise ParseError(f"{label_path}:{lineno}: unknown node id {raw_id!r}")
            if name not in name_to_id:
                name_to_id[name] = len(label_names)
                label_names.append(name)
            labels[index[raw_id]] = name_to_id[name]

    edge_arr = np.array(sorted(edges), dtype=np.int64) if edges else np.zeros((0, 2), np.int64)
    graph = TextualGraph(n, edge_arr, texts, node_ids, labels, label_names,
                         self_loops, duplicates)
    graph.validate()
    return graph


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

@dataclass
class Vocabulary:
    token_to_id: dict
    id_to_token: list            # index 0 is the pad placeholder

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: list) -> list[int]:
        """Map tokens to ids, dropping those below the count threshold
        (they map to the pad id and carry no content)."""
        ids = (self.token_to_id.get(t, PAD_ID) for t in tokens)
        return [i for i in ids if i != PAD_ID]


def build_vocab(graph: TextualGraph, min_count: int = 1) -> Vocabulary:
    """Tokens occurring at least min_count times get ids in first-occurrence
    order starting at 1; everything else maps to the pad id."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    order: list[str] = []
    for tokens in graph.texts:
        for t in tokens:
            if t not in counts:
                counts[t] = 0
                order.append(t)
            counts[t] += 1
    if not order:
        raise ValueError("empty corpus: no tokens in any node text")
    id_to_token = [PAD_TOKEN]
    token_to_id = {}
    for t in order:
        if counts[t] >= min_count:
            token_to_id[t] = len(id_to_token)
            id_to_token.append(t)
    return Vocabulary(token_to_id, id_to_token)


def encode_texts(graph: TextualGraph, vocab: Vocabulary) -> list[list[int]]:
    return [vocab.encode(tokens) for tokens in graph.texts]


# ---------------------------------------------------------------------------
# padding / masking
# ---------------------------------------------------------------------------

@dataclass
class PaddedText:
    ids: np.ndarray    # (L,) int32
    mask: np.ndarray   # (L,) float64, 1.0 on the real-token prefix


def pad_and_mask(token_ids, length: int) -> PaddedText:
    """Truncate to the first `length` ids or pad with the pad id; the mask
    marks real positions."""
    if length < 1:
        raise ValueError("pad length must be >= 1")
    ids = np.full(length, PAD_ID, dtype=np.int32)
    mask = np.zeros(length, dtype=np.float64)
    k = min(len(token_ids), length)
    if k:
        ids[:k] = token_ids[:k]
        mask[:k] = 1.0
    return PaddedText(ids, mask)


@dataclass
class TextTensor:
    """All node texts padded into one pair of arrays for batched lookup."""
    ids: np.ndarray      # (n, L) int32
    mask: np.ndarray     # (n, L) float64
    lengths: np.ndarray  # (n,) int64, number of real tokens (capped at L)


def build_text_tensor(token_seqs: list[list[int]], length: int) -> TextTensor:
    n = len(token_seqs)
    ids = np.full((n, length), PAD_ID, dtype=np.int32)
    mask = np.zeros((n, length), dtype=np.float64)
    lengths = np.zeros(n, dtype=np.int64)
    for i, seq in enumerate(token_seqs):
        p = pad_and_mask(seq, length)
        ids[i] = p.ids
        mask[i] = p.mask
        lengths[i] = min(len(seq), length)
    return TextTensor(ids, mask, lengths)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


@dataclass
class EdgeSplit:
    train_edges: np.ndarray   # (k, 2) int64
    test_edges: np.ndarray
    ratio: float
    seed: int
    train_index: np.ndarray | None = None   # indices into graph.edges
    test_index: np.ndarray | None = None


def split_edges(graph: TextualGraph, ratio: float, seed: int) -> EdgeSplit:
    """Uniformly random train/test split of the edge list; |train| is
    round(ratio/100 * |E|), reproducible for a fixed seed."""
    if not (0 < ratio <= 100):
        raise ValueError(f"edge split ratio must be in (0, 100], got {ratio}")
    m = len(graph.edges)
    n_train = _round_half_up(ratio / 100.0 * m)
    perm = RngStream(seed, "edge_split").permutation(m)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return EdgeSplit(graph.edges[train_idx], graph.edges[test_idx],
                     ratio, seed, train_idx, test_idx)


@dataclass
class NodeSplit:
    """Unseen-node protocol: seen nodes keep their induced edges for
    training; every held-out edge touches at least one unseen node."""
    seen: np.ndarray
    unseen: np.ndarray
    train_edges: np.ndarray
    test_edges: np.ndarray
    ratio: float
    seed: int
    train_index: np.ndarray | None = None
    test_index: np.ndarray | None = None


def split_nodes_unseen(graph: TextualGraph, ratio: float, seed: int) -> NodeSplit:
    if not (0 < ratio < 100):
        raise ValueError(f"node split ratio must be in (0, 100), got {ratio}")
    n = graph.node_count
    n_seen = _round_half_up(ratio / 100.0 * n)
    if n_seen >= n:
        raise ValueError(f"ratio {ratio} leaves no unseen nodes for {n} nodes")
    perm = RngStream(seed, "node_split").permutation(n)
    seen = np.sort(perm[:n_seen])
    unseen = np.sort(perm[n_seen:])
    is_seen = np.zeros(n, dtype=bool)
    is_seen[seen] = True
    both_seen = is_seen[graph.edges[:, 0]] & is_seen[graph.edges[:, 1]]
    train_idx = np.nonzero(both_seen)[0]
    test_idx = np.nonzero(~both_seen)[0]
    return NodeSplit(seen, unseen, graph.edges[train_idx], graph.edges[test_idx],
                     ratio, seed, train_idx, test_idx)


# ---------------------------------------------------------------------------
# persistence (prepare artifacts)
# ---------------------------------------------------------------------------

def save_graph(graph: TextualGraph, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "nodes.tsv"), "w", encoding="utf-8") as f:
        for i, raw in enumerate(graph.node_ids):
            f.write(f"{i}\t{raw}\n")
    with open(os.path.join(out_dir, "edges.tsv"), "w") as f:
        for u, v in graph.edges:
            f.write(f"{u} {v}\n")
    with open(os.path.join(out_dir, "texts.tsv"), "w", encoding="utf-8") as f:
        for i, tokens in enumerate(graph.texts):
            f.write(f"{i}\t{' '.join(tokens)}\n")
    if graph.labels is not None:
        with open(os.path.join(out_dir, "labels.tsv"), "w", encoding="utf-8") as f:
            for i, lab in enumerate(graph.labels):
                if lab >= 0:
                    f.write(f"{i}\t{graph.label_names[lab]}\n")


def load_saved_graph(in_dir: str) -> TextualGraph:
    node_ids = []
    with open(os.path.join(in_dir, "nodes.tsv"), encoding="utf-8") as f:
        for line in f:
            _, raw = line.rstrip("\n").split("\t", 1)
            node_ids.append(raw)
    n = len(node_ids)
    edges = []
    with open(os.path.join(in_dir, "edges.tsv")) as f:
        for line in f:
            u, v = line.split()
            edges.append((int(u), int(v)))
    texts: list = [[] for _ in range(n)]
    with open(os.path.join(in_dir, "texts.tsv"), encoding="utf-8") as f:
        for line in f:
            i, text = line.rstrip("\n").split("\t", 1)
            texts[int(i)] = text.split() if text else []
    labels = None
    label_names: list[str] = []
    label_path = os.path.join(in_dir, "labels.tsv")
    if os.path.exists(label_path):
        labels = np.full(n, -1, dtype=np.int64)
        name_to_id: dict[str, int] = {}
        with open(label_path, encoding="utf-8") as f:
            for line in f:
                i, name = line.rstrip("\n").split("\t", 1)
                if name not in name_to_id:
                    name_to_id[name] = len(label_names)
                    label_names.append(name)
                labels[int(i)] = name_to_id[name]
    edge_arr = np.array(edges, dtype=np.int64) if edges else np.zeros((0, 2), np.int64)
    graph = TextualGraph(n, edge_arr, texts, node_ids, labels, label_names)
    graph.validate()
    return graph


def save_vocab(vocab: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for token in vocab.id_to_token:
            f.write(token + "\n")


def load_vocab(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        id_to_token = [line.rstrip("\n") for line in f]
    token_to_id = {t: i for i, t in enumerate(id_to_token) if i != PAD_ID}
    return Vocabulary(token_to_id, id_to_token)


def save_split(split, path: str) -> None:
    """Split manifest: seed, ratio, and edge index lists for bit-exact replay."""
    payload = {
        "kind": "nodes" if isinstance(split, NodeSplit) else "edges",
        "seed": split.seed,
        "ratio": split.ratio,
        "train_index": [int(i) for i in split.train_index],
        "test_index": [int(i) for i in split.test_index],
    }
    if isinstance(split, NodeSplit):
        payload["seen"] = [int(i) for i in split.seen]
        payload["unseen"] = [int(i) for i in split.unseen]
    with open(path, "w") as f:
        json.dump(payload, f)
        f.write("\n")


def load_split(path: str, graph: TextualGraph):
    with open(path) as f:
        payload = json.load(f)
    train_idx = np.array(payload["train_index"], dtype=np.int64)
    test_idx = np.array(payload["test_index"], dtype=np.int64)
    train = graph.edges[train_idx] if len(train_idx) else np.zeros((0, 2), np.int64)
    test = graph.edges[test_idx] if len(test_idx) else np.zeros((0, 2), np.int64)
    if payload["kind"] == "nodes":
        return NodeSplit(np.array(payload["seen"], dtype=np.int64),
                         np.array(payload["unseen"], dtype=np.int64),
                         train, test, payload["ratio"], payload["seed"],
                         train_idx, test_idx)
    return EdgeSplit(train, test, payload["ratio"], payload["seed"],
                     train_idx, test_idx)
