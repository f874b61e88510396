"""Adversarial context-aware node embeddings for textual networks."""

from .config import MODES, TrainConfig
from .corpus import (EdgeSplit, NodeSplit, TextualGraph, Vocabulary,
                     build_vocab, load_graph, split_edges, split_nodes_unseen)
from .trainer import ModelParams, TrainContext, aggregate_embeddings, train

__all__ = [
    "MODES", "TrainConfig", "EdgeSplit", "NodeSplit", "TextualGraph",
    "Vocabulary", "build_vocab", "load_graph", "split_edges",
    "split_nodes_unseen", "ModelParams", "TrainContext",
    "aggregate_embeddings", "train",
]

__version__ = "0.1.0"
