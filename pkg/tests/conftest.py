import os

import numpy as np
import pytest

from textnet import corpus, trainer
from textnet.config import TrainConfig
from textnet.numerics import RngFactory


def write_toy_files(tmp_path, n_comm=6, n_per=12, p_in=0.8, p_out=0.005,
                    seed=42, n_words=10, text_len=8, labels=False):
    """Planted-partition toy graph with community-specific vocabularies,
    written in the raw input formats."""
    os.makedirs(str(tmp_path), exist_ok=True)
    rng = np.random.default_rng(seed)
    n = n_comm * n_per
    texts = []
    for i in range(n):
        c = i // n_per
        voc = [f"w{c}_{k}" for k in range(n_words)]
        texts.append(" ".join(voc[int(rng.integers(0, n_words))]
                              for _ in range(text_len)))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_in if (i // n_per) == (j // n_per) else p_out
            if rng.random() < p:
                edges.append((i, j))
    edge_path = os.path.join(tmp_path, "edges.txt")
    text_path = os.path.join(tmp_path, "texts.txt")
    with open(edge_path, "w") as f:
        for u, v in edges:
            f.write(f"{u} {v}\n")
    with open(text_path, "w") as f:
        for i, t in enumerate(texts):
            f.write(f"{i}\t{t}\n")
    label_path = None
    if labels:
        label_path = os.path.join(tmp_path, "labels.txt")
        with open(label_path, "w") as f:
            for i in range(n):
                f.write(f"{i}\tclass{i // n_per}\n")
    return edge_path, text_path, label_path


def toy_config(mode="ACNE", **overrides):
    base = dict(mode=mode, dim=16, batch_size=32, epochs=40, pad_length=10,
                pretrain_epochs=400, lr=0.005, patience=6, val_fraction=0.1,
                seed=7)
    base.update(overrides)
    return TrainConfig(**base)


def train_toy(tmp_path, mode="ACNE", ratio=60.0, split_seed=3, **overrides):
    """Full library-level run on the standard toy; returns everything the
    evaluation tests need."""
    ep, tp, _ = write_toy_files(str(tmp_path))
    graph = corpus.load_graph(ep, tp)
    vocab = corpus.build_vocab(graph, 1)
    split = corpus.split_edges(graph, ratio, seed=split_seed)
    cfg = toy_config(mode, **overrides).resolved(ratio)
    rngs = RngFactory(cfg.seed)
    ctx = trainer.TrainContext.build(graph, vocab, split, cfg, rngs)
    params = trainer.ModelParams.init(graph.node_count, vocab.size, cfg.dim,
                                      rngs.stream("init"))
    if cfg.adversarial and cfg.pretrain_epochs:
        trainer.pretrain_generator(ctx, params, cfg, rngs)
    result = trainer.train(ctx, params, cfg, rngs)
    Z = trainer.aggregate_embeddings(ctx.text, params, cfg, rngs)
    return graph, split, cfg, ctx, params, result, Z


@pytest.fixture(scope="session")
def trained_toy(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy_run")
    return train_toy(tmp)


def random_text_instance(rng, n_vocab=9, dim=4, length=5, n_pairs=2):
    """Random padded pair batch with healthy masks for gradient tests."""
    from textnet.corpus import TextTensor
    n_nodes = 2 * n_pairs + 1
    lengths = rng.integers(1, length + 1, size=n_nodes)
    ids = np.zeros((n_nodes, length), dtype=np.int32)
    mask = np.zeros((n_nodes, length))
    for i in range(n_nodes):
        ids[i, :lengths[i]] = rng.integers(1, n_vocab, size=lengths[i])
        mask[i, :lengths[i]] = 1.0
    words = rng.normal(size=(n_vocab, dim)) * 0.5
    words[0] = 0.0
    struct = rng.normal(size=(n_nodes, dim)) * 0.5
    text = TextTensor(ids, mask, lengths.astype(np.int64))
    return text, words, struct
