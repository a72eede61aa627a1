"""Summary scoring against human-selected frames.

Each automated frame earns a semantic score (1 if it shares a label with
any human-selected frame, else 0) and a representative score (linear time
decay, within a window ``W``, to the closest label-sharing human frame).
The total is the mean over the K automated frames of::

    srum_weight * semantic + (1 - srum_weight) * representative

Matching is many-to-one: several automated frames may match the same
human frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HumanSampleSet:
    evaluator_id: str
    frame_indices: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "frame_indices", tuple(int(i) for i in self.frame_indices))
        if any(i < 0 for i in self.frame_indices):
            raise ValueError("frame indices must be non-negative")

    def __len__(self) -> int:
        return len(self.frame_indices)


@dataclass(frozen=True)
class FrameScore:
    frame_index: Optional[int]
    matched_human_frame: Optional[int]
    semantic: int
    representative: float
    weighted: float


@dataclass(frozen=True)
class SrumReport:
    frames: tuple
    total: float
    weight: float
    window: float
    padded: int = 0

    @property
    def mean_semantic(self) -> float:
        return sum(f.semantic for f in self.frames) / len(self.frames) if self.frames else 0.0

    @property
    def mean_representative(self) -> float:
        return sum(f.representative for f in self.frames) / len(self.frames) if self.frames else 0.0


def _labels_of(frame: int, labels: Mapping[int, frozenset]) -> frozenset:
    try:
        return labels[frame]
    except KeyError:
        raise KeyError(f"frame_index {frame} has no label record") from None


def _time_of(frame: int, timestamps: Mapping[int, float]) -> float:
    try:
        return timestamps[frame]
    except KeyError:
        raise KeyError(f"frame_index {frame} has no timestamp") from None


def semantic_score(auto_frame: int, human: HumanSampleSet, labels: Mapping[int, frozenset]) -> int:
    mine = _labels_of(auto_frame, labels)
    if not mine:
        return 0
    for h in human.frame_indices:
        if mine & _labels_of(h, labels):
            return 1
    return 0


def _best_match(auto_frame, human, labels, timestamps, window) -> tuple[Optional[int], float]:
    mine = _labels_of(auto_frame, labels)
    t = _time_of(auto_frame, timestamps)
    best_frame, best = None, 0.0
    if not mine:
        return None, 0.0
    for h in human.frame_indices:
        if not mine & _labels_of(h, labels):
            continue
        score = max(0.0, 1.0 - abs(t - _time_of(h, timestamps)) / window)
        if best_frame is None or score > best:
            best_frame, best = h, score
    return best_frame, best


def representative_score(
    auto_frame: int,
    human: HumanSampleSet,
    labels: Mapping[int, frozenset],
    timestamps: Mapping[int, float],
    window: float,
) -> float:
    if not window > 0:
        raise ValueError(f"window must be positive, got {window!r}")
    return _best_match(auto_frame, human, labels, timestamps, window)[1]


def default_window(timestamps: Mapping[int, float], fraction: float = 0.1) -> float:
    """Ten percent of the stream's duration (1 s for a zero-length stream)."""
    if not timestamps:
        return 1.0
    span = max(timestamps.values()) - min(timestamps.values())
    return fraction * span if span > 0 else 1.0


def srum_score(
    auto: Sequence[int],
    human: HumanSampleSet,
    labels: Mapping[int, frozenset],
    timestamps: Mapping[int, float],
    *,
    weight: float = 0.5,
    window: Optional[float] = None,
    capacity: Optional[int] = None,
) -> SrumReport:
    """Score an automated selection against one human selection.

    ``auto`` is a SampleSet or a sequence of frame indices. Selections
    shorter than ``capacity`` (default: the sample set's capacity, else the
    human set's size) are padded with zero-score slots.
    """
    if hasattr(auto, "frame_indices"):
        if capacity is None:
            capacity = auto.capacity
        auto = auto.frame_indices
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {weight!r}")
    if window is None:
        window = default_window(timestamps)
    if not window > 0:
        raise ValueError(f"window must be positive, got {window!r}")
    k = len(human) if capacity is None else capacity
    auto = [int(i) for i in auto]
    if len(auto) > k:
        raise ValueError(f"automated selection has {len(auto)} frames, more than K = {k}")
    frames = []
    for a in auto:
        sem = semantic_score(a, human, labels)
        matched, rep = _best_match(a, human, labels, timestamps, window)
        frames.append(FrameScore(a, matched, sem, rep, weight * sem + (1.0 - weight) * rep))
    padded = k - len(auto)
    if padded:
        log.info("padding selection of %d frames to K = %d with zero scores", len(auto), k)
        frames.extend(FrameScore(None, None, 0, 0.0, 0.0) for _ in range(padded))
    total = sum(f.weighted for f in frames) / k if k else 0.0
    return SrumReport(tuple(frames), total, weight, window, padded)


def srum_against_all(auto, humans, labels, timestamps, **kwargs) -> float:
    """Mean SRUM total of one selection over several human selections."""
    if not humans:
        raise ValueError("need at least one human selection")
    return sum(srum_score(auto, h, labels, timestamps, **kwargs).total for h in humans) / len(humans)


def human_benchmark(
    all_humans: Sequence[HumanSampleSet],
    labels: Mapping[int, frozenset],
    timestamps: Mapping[int, float],
    *,
    weight: float = 0.5,
    window: Optional[float] = None,
) -> float:
    """Leave-one-out score: each evaluator against every other, averaged."""
    if len(all_humans) < 2:
        raise ValueError("human benchmark needs at least 2 evaluators")
    per_evaluator = []
    for i, e in enumerate(all_humans):
        others = [h for j, h in enumerate(all_humans) if j != i]
        per_evaluator.append(
            srum_against_all(e.frame_indices, others, labels, timestamps, weight=weight, window=window, capacity=len(e))
        )
    return sum(per_evaluator) / len(per_evaluator)
