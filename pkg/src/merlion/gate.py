"""Query-conditioned relevance gate: scaled softmax over query cosines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import QuerySet
from .errors import DegenerateEmbeddingError, DimensionMismatchError


@dataclass(frozen=True)
class GateScore:
    """Gate output for one frame.

    ``value`` is 100 times the softmax weight of the positive query, so it
    lives on the same 0-100 scale as the gate thresholds.
    """

    value: float
    positive_cosine: float
    per_query_cosines: tuple
    scale: float = 100.0

    @property
    def components(self) -> np.ndarray:
        logits = self.scale * np.asarray(self.per_query_cosines)
        w = np.exp(logits - logits.max())
        return w / w.sum()


def query_cosines(frame_embedding: np.ndarray, queries: QuerySet) -> np.ndarray:
    v = np.asarray(frame_embedding, dtype=np.float64)
    if v.shape != (queries.dim,):
        raise DimensionMismatchError(f"frame dim {v.shape[-1] if v.ndim else 0} != query dim {queries.dim}")
    norm = math.sqrt(float(np.dot(v, v)))
    if norm == 0.0:
        raise DegenerateEmbeddingError("zero-norm frame embedding")
    return np.clip(queries.unit_matrix @ v / norm, -1.0, 1.0)


def softmax_positive(cosines: np.ndarray, scale: float) -> float:
    """100 x softmax weight of entry 0, with max-subtraction."""
    logits = scale * cosines
    w = np.exp(logits - logits.max())
    return float(100.0 * w[0] / w.sum())


def gate_score(frame_embedding, queries: QuerySet, scale: float = 100.0) -> GateScore:
    if not scale > 0.0:
        raise ValueError(f"softmax scale must be positive, got {scale!r}")
    cos = query_cosines(frame_embedding, queries)
    return GateScore(
        value=softmax_positive(cos, scale),
        positive_cosine=float(cos[0]),
        per_query_cosines=tuple(float(c) for c in cos),
        scale=scale,
    )


def passes_gate(score, tau: float) -> bool:
    """Strict threshold test; accepts a :class:`GateScore` or a bare value."""
    value = score.value if isinstance(score, GateScore) else float(score)
    return value > tau
