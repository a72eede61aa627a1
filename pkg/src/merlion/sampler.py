"""Fixed-capacity online sampler driven by surprise and packing threshold.

A frame's *surprise* is its distance to the nearest member of the current
sample set. The *packing threshold* is the mean nearest-neighbour distance
inside the set. After the set has been seeded with its first ``K`` offered
frames, a frame is admitted only when its surprise strictly exceeds the
packing threshold; the set is then trimmed back to ``K`` entries by
dropping whichever member's removal leaves the largest packing threshold
(oldest first on ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedding import FrameRecord, SampleEntry, as_embedding, distances_to
from .errors import DimensionMismatchError, SamplerStateError

SEED_FILL = "seed_fill"
ACCEPTED = "accepted"
REJECTED_GATE = "rejected_gate"
REJECTED_SURPRISE = "rejected_surprise"
REJECTED_POST_ENHANCEMENT = "rejected_post_enhancement"
ACTIONS = (SEED_FILL, ACCEPTED, REJECTED_GATE, REJECTED_SURPRISE, REJECTED_POST_ENHANCEMENT)


@dataclass(slots=True)
class SamplerDecision:
    """Outcome of one frame. ``alpha``/``gamma`` are set iff the surprise test ran."""

    frame_index: int
    action: str
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    trimmed_frame_indices: tuple = ()
    gate: Optional[float] = None
    gate_enhanced: Optional[float] = None
    note: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "action": self.action,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "trimmed": list(self.trimmed_frame_indices),
            "gate": self.gate,
            "gate_enhanced": self.gate_enhanced,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerDecision":
        if d.get("action") not in ACTIONS:
            raise ValueError(f"unknown action {d.get('action')!r}")
        return cls(
            frame_index=int(d["frame_index"]),
            action=d["action"],
            alpha=d.get("alpha"),
            gamma=d.get("gamma"),
            trimmed_frame_indices=tuple(int(i) for i in d.get("trimmed", ())),
            gate=d.get("gate"),
            gate_enhanced=d.get("gate_enhanced"),
            note=d.get("note"),
        )


class SampleSet:
    """Capacity-K ordered sample set.

    Besides the entries it keeps the pairwise distance matrix of the
    sampler features for the metric last used, so that the packing
    threshold costs O(K^2) without recomputing distances.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[SampleEntry] = []
        self.offered = 0
        self.last_offered_index: Optional[int] = None
        self._features: Optional[np.ndarray] = None
        self._metric: Optional[str] = None
        self._dist: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(list(self.entries))

    @property
    def frame_indices(self) -> list[int]:
        return [e.frame_index for e in self.entries]

    @property
    def is_seeding(self) -> bool:
        """True while fewer than K frames have been offered."""
        return self.offered < self.capacity

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = np.vstack([e.sampler_feature for e in self.entries])
        return self._features

    def distance_matrix(self, metric: str) -> np.ndarray:
        """Pairwise distances with ``inf`` on the diagonal."""
        if self._metric != metric or self._dist is None:
            n = len(self.entries)
            feats = self.features if n else np.empty((0, 0))
            dist = np.empty((n, n))
            for i in range(n):
                dist[i] = distances_to(feats[i], feats, metric)
            # enforce exact symmetry: row i was computed with i as the reference
            dist = np.minimum(dist, dist.T) if n else dist
            np.fill_diagonal(dist, np.inf)
            self._metric = metric
            self._dist = dist
        return self._dist

    def append(self, entry: SampleEntry, metric: Optional[str] = None, row: Optional[np.ndarray] = None) -> None:
        if self.entries and entry.sampler_feature.shape != self.entries[0].sampler_feature.shape:
            raise DimensionMismatchError(
                f"feature dim {entry.sampler_feature.shape[0]} != set dim {self.entries[0].sampler_feature.shape[0]}"
            )
        if self.entries and entry.frame_index <= self.entries[-1].frame_index:
            raise SamplerStateError("sample entries must have strictly increasing frame_index")
        old_n = len(self.entries)
        self.entries.append(entry)
        if metric is not None and metric == self._metric and self._dist is not None:
            if row is None:
                row = distances_to(entry.sampler_feature, self.features, metric)
            dist = np.empty((old_n + 1, old_n + 1))
            dist[:old_n, :old_n] = self._dist
            dist[old_n, :old_n] = row
            dist[:old_n, old_n] = row
            dist[old_n, old_n] = np.inf
            self._dist = dist
        else:
            self._dist = None
        if self._features is not None:
            self._features = np.vstack([self._features, entry.sampler_feature[None, :]])

    def remove_at(self, pos: int) -> SampleEntry:
        entry = self.entries.pop(pos)
        if self._features is not None:
            self._features = np.delete(self._features, pos, axis=0) if self.entries else None
        if self._dist is not None:
            keep = [i for i in range(len(self.entries) + 1) if i != pos]
            self._dist = self._dist[np.ix_(keep, keep)]
        return entry

    def copy(self) -> "SampleSet":
        other = SampleSet(self.capacity)
        other.entries = list(self.entries)
        other.offered = self.offered
        other.last_offered_index = self.last_offered_index
        return other


def _nearest_neighbour(dist: np.ndarray) -> np.ndarray:
    return dist.min(axis=1)


def surprise(candidate_feature, sample_set: SampleSet, metric: str = "euclidean") -> float:
    """Minimum distance from the candidate to any entry's sampler feature."""
    if len(sample_set) == 0:
        raise SamplerStateError("surprise undefined on empty set")
    x = np.asarray(candidate_feature, dtype=np.float64)
    return float(distances_to(x, sample_set.features, metric).min())


def pack_threshold(sample_set: SampleSet, metric: str = "euclidean") -> float:
    """Mean over entries of each entry's nearest-neighbour distance within the set."""
    n = len(sample_set)
    if n < 2:
        raise SamplerStateError(f"γ undefined for a sample set of size {n}")
    nn = _nearest_neighbour(sample_set.distance_matrix(metric))
    # fsum is order-independent, so removal ties compare exactly
    return math.fsum(nn.tolist()) / n


def _gamma_after_each_removal(dist: np.ndarray) -> list[float]:
    n = dist.shape[0]
    if n <= 2:
        # a singleton has no neighbours; its packing threshold is taken as 0
        return [0.0] * n
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(n)
    first = dist[rows, order[:, 0]]
    second = dist[rows, order[:, 1]]
    nearest = order[:, 0]
    out = []
    for r in range(n):
        nn = np.where(nearest == r, second, first)
        vals = [nn[i] for i in range(n) if i != r]
        out.append(math.fsum(vals) / (n - 1))
    return out


def trim_sample_set(state: SampleSet, metric: str = "euclidean") -> int:
    """Remove one entry from an over-full set and return its frame_index.

    The removed entry is the one whose removal maximises the packing
    threshold of the remainder; ties go to the older entry.
    """
    n = len(state)
    if n <= state.capacity:
        raise SamplerStateError(f"trim requires more than {state.capacity} entries, have {n}")
    gammas = _gamma_after_each_removal(state.distance_matrix(metric))
    best = 0
    for r in range(1, n):
        if gammas[r] > gammas[best]:
            best = r
    return state.remove_at(best).frame_index


def make_entry(frame: FrameRecord, feature: np.ndarray, raw_embedding=None, enhanced: bool = False) -> SampleEntry:
    return SampleEntry(
        frame_index=frame.frame_index,
        timestamp=frame.timestamp,
        sampler_feature=feature,
        raw_embedding=frame.embedding if raw_embedding is None else raw_embedding,
        enhanced=enhanced,
    )


def observe(
    frame: FrameRecord,
    feature,
    state: SampleSet,
    config,
    *,
    raw_embedding=None,
    enhanced: bool = False,
) -> SamplerDecision:
    """Offer one (already transformed) frame feature to the sampler.

    ``config`` needs ``distance_metric``; its ``capacity`` must match the
    state's. ``raw_embedding`` records the embedding the feature was built
    from when it differs from ``frame.embedding`` (enhanced frames).
    """
    idx = frame.frame_index
    if state.last_offered_index is not None and idx <= state.last_offered_index:
        raise SamplerStateError(f"frame_index {idx} offered after {state.last_offered_index}; indices must increase")
    feature = np.asarray(feature, dtype=np.float64)
    if state.entries and feature.shape != state.entries[0].sampler_feature.shape:
        raise DimensionMismatchError(f"feature dim {feature.shape} != set dim {state.entries[0].sampler_feature.shape}")
    metric = config.distance_metric
    seeding = state.is_seeding
    state.offered += 1
    state.last_offered_index = idx
    entry = make_entry(frame, feature, raw_embedding, enhanced)

    if seeding:
        state.append(entry, metric)
        return SamplerDecision(idx, SEED_FILL)

    if not state.entries:
        # only reachable when a caller hands in an emptied state after seeding
        state.append(entry, metric)
        return SamplerDecision(idx, ACCEPTED)

    row = distances_to(feature, state.features, metric)
    alpha = float(row.min())
    gamma = pack_threshold(state, metric) if len(state) >= 2 else 0.0
    if not alpha > gamma:
        return SamplerDecision(idx, REJECTED_SURPRISE, alpha, gamma)

    state.distance_matrix(metric)
    state.append(entry, metric, row)
    trimmed = []
    while len(state) > state.capacity:
        trimmed.append(trim_sample_set(state, metric))
    return SamplerDecision(idx, ACCEPTED, alpha, gamma, tuple(trimmed))


def summary(state: SampleSet) -> list[SampleEntry]:
    return list(state.entries)
