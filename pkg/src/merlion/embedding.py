"""Embedding vectors, frame records and the vector math shared by the pipeline.

Embeddings are plain 1-D ``float64`` numpy arrays. ``as_embedding`` is the
single place where arbitrary input is validated and coerced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateEmbeddingError, DimensionMismatchError

METRICS = ("euclidean", "cosine", "l1")
FEATURE_NORMS = ("l1", "l2")


def as_embedding(values, *, dim: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 vector, optionally checking its dim."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] < 1:
        raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding contains NaN or Inf")
    if dim is not None and vec.shape[0] != dim:
        raise DimensionMismatchError(f"expected dim {dim}, got {vec.shape[0]}")
    return vec


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(f"dim mismatch: {a.shape[-1]} != {b.shape[-1]}")


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame_index: int
    timestamp: float
    embedding: np.ndarray
    # evaluation-only channel; samplers never read it
    labels: Optional[frozenset] = None

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[0])


@dataclass(frozen=True, eq=False)
class QuerySet:
    """One positive query embedding followed by one or more negatives."""

    positive: np.ndarray
    negatives: tuple

    def __post_init__(self) -> None:
        pos = as_embedding(self.positive)
        if len(self.negatives) == 0:
            raise ValueError("query set needs at least one negative query")
        negs = tuple(as_embedding(n, dim=pos.shape[0]) for n in self.negatives)
        for q in (pos, *negs):
            if not np.any(q):
                raise DegenerateEmbeddingError("zero-norm query")
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negatives", negs)

    @classmethod
    def from_rows(cls, rows: Sequence) -> "QuerySet":
        rows = list(rows)
        if len(rows) < 2:
            raise ValueError("query set needs a positive and at least one negative")
        return cls(rows[0], tuple(rows[1:]))

    @property
    def dim(self) -> int:
        return int(self.positive.shape[0])

    @property
    def size(self) -> int:
        return 1 + len(self.negatives)

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.vstack([self.positive, *self.negatives])

    @cached_property
    def unit_matrix(self) -> np.ndarray:
        m = self.matrix
        return m / np.linalg.norm(m, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SampleEntry:
    frame_index: int
    timestamp: float
    sampler_feature: np.ndarray
    raw_embedding: np.ndarray
    enhanced: bool = False


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_dims(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbeddingError("zero-norm vector in cosine similarity")
    c = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, c))


def sampler_transform(v, norm: str = "l1") -> np.ndarray:
    """Elementwise absolute value followed by L1 (default) or L2 normalization."""
    a = np.abs(np.asarray(v, dtype=np.float64))
    if norm == "l1":
        total = a.sum()
    elif norm == "l2":
        total = np.sqrt(np.dot(a, a))
    else:
        raise ValueError(f"unknown feature norm {norm!r}")
    if total == 0.0:
        raise DegenerateEmbeddingError("all-zero vector cannot be normalized")
    return a / total


def distances_to(x: np.ndarray, rows: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Distance from ``x`` to every row of ``rows``.

    Every distance in the sampler goes through this function so that cached
    pairwise values and fresh candidate distances agree bit for bit.
    """
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-D array")
    _check_dims(x, rows)
    if metric == "euclidean":
        diff = rows - x
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if metric == "l1":
        return np.abs(rows - x).sum(axis=1)
    if metric == "cosine":
        # 1 - cos(a, b) == |a/|a| - b/|b||^2 / 2; exact zero for identical inputs
        # same reduction for both sides keeps d(a, b) == d(b, a) bitwise
        nx = np.sqrt(np.einsum("ij,ij->i", x[None, :], x[None, :]))[0]
        nr = np.sqrt(np.einsum("ij,ij->i", rows, rows))
        if nx == 0.0 or np.any(nr == 0.0):
            raise DegenerateEmbeddingError("zero-norm vector in cosine distance")
        diff = rows / nr[:, None] - x / nx
        return 0.5 * np.einsum("ij,ij->i", diff, diff)
    raise ValueError(f"unknown distance metric {metric!r}")


def distance(a, b, metric: str = "euclidean") -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(distances_to(a, b[None, :], metric)[0])
