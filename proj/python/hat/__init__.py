"""Hierarchical cross-modal retrieval: two-stream encoders with multi-level
taps, stacked cross-attention alignment, and Recall@K evaluation."""

from ._core import (
    ConfigError,
    Error,
    InputError,
    IoError,
    Model,
    ParseError,
    ShapeError,
    TapeError,
    TrainError,
    evaluate,
    generate_corpus,
    grad_check,
    recall_at_k,
    score_matrix,
    similarity,
    triplet_loss,
)

__all__ = [
    "ConfigError",
    "Error",
    "InputError",
    "IoError",
    "Model",
    "ParseError",
    "ShapeError",
    "TapeError",
    "TrainError",
    "evaluate",
    "generate_corpus",
    "grad_check",
    "recall_at_k",
    "score_matrix",
    "similarity",
    "triplet_loss",
]
