"""Trainable dense-retrieval candidate generation for entity linking."""

from . import bpe, corpus, encoder, evaluation, pooling, retrieval, synthetic, templates, training

__all__ = [
    "bpe",
    "corpus",
    "encoder",
    "evaluation",
    "pooling",
    "retrieval",
    "synthetic",
    "templates",
    "training",
]

__version__ = "0.1.0"
