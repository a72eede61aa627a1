"""Synthetic labelled embedding streams with planted clusters and murk.

The world has ``n_targets`` query-relevant clusters (labelled
``target_<i>``) and ``n_distractors`` irrelevant ones (``distractor_<i>``).
Cluster centres are unit vectors carrying a positive (targets) or negative
(distractors) component along a hidden semantic axis; the positive query
leans towards that axis and the negative query away from it, so clean
frames of target clusters score high at the gate and distractors low.

Frames follow a schedule of cluster segments. A clean frame is
``normalize(centre + N(0, noise_sigma^2 I))``; its murky twin is the blend
``(1 - m) * clean + m * murk_vector``, which pulls every frame towards a
common direction and flattens the gate's discrimination. ``mock_demurk``
inverts the blend exactly.

Synthetic evaluators pick one frame per target cluster (up to K frames)
near the middle of one of that cluster's segments, with Gaussian time
jitter.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import SamplerConfig, format_kv, parse_kv_text
from .embedding import FrameRecord, QuerySet, sampler_transform
from .errors import ConfigError
from .sampler import SampleSet, make_entry, observe
from .srum import HumanSampleSet

CENTER_RETRIES = 200


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    dim: int = 64
    n_frames: int = 600
    fps: float = 5.0
    n_targets: int = 6
    n_distractors: int = 4
    dwell_min: int = 20
    dwell_max: int = 60
    noise_sigma: float = 0.1
    max_center_cosine: float = 0.7
    # centre component along the semantic axis (targets +, distractors -)
    target_strength: float = 0.5
    distractor_strength: float = 0.4
    # half-angle between the two queries around the shared scene direction
    query_margin: float = 0.02
    murk_level: float = 0.0
    capacity: int = 6
    n_humans: int = 5
    human_jitter: float = 2.0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if self.n_targets < 1 or self.n_distractors < 0:
            raise ConfigError("need >= 1 target cluster and >= 0 distractor clusters")
        if not 1 <= self.dwell_min <= self.dwell_max:
            raise ConfigError("need 1 <= dwell_min <= dwell_max")
        if not 0.0 <= self.murk_level < 1.0:
            raise ConfigError(f"murk_level must lie in [0, 1), got {self.murk_level!r}")
        if self.noise_sigma < 0 or self.fps <= 0 or self.human_jitter < 0:
            raise ConfigError("noise_sigma, human_jitter must be >= 0 and fps > 0")
        if self.capacity < 1 or self.n_humans < 0:
            raise ConfigError("capacity must be >= 1 and n_humans >= 0")

    @property
    def n_clusters(self) -> int:
        return self.n_targets + self.n_distractors

    def cluster_name(self, c: int) -> str:
        return f"target_{c}" if c < self.n_targets else f"distractor_{c - self.n_targets}"

    def replace(self, **changes) -> "SynthSpec":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return format_kv(dataclasses.asdict(self))

    @classmethod
    def from_mapping(cls, raw) -> "SynthSpec":
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for key, text in raw.items():
            if key not in fields:
                raise ConfigError(f"unknown synth spec key {key!r}")
            default = getattr(cls, key)
            conv = int if isinstance(default, int) else float
            try:
                values[key] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
        return cls(**values)

    @classmethod
    def from_text(cls, text: str, source: str = "<spec>") -> "SynthSpec":
        return cls.from_mapping(parse_kv_text(text, source=source))


@dataclass
class SynthStream:
    spec: SynthSpec
    frames: list  # murky stream
    clean: list  # aligned clean ("enhanced") twin
    labels: dict
    queries: QuerySet
    murk_vector: np.ndarray
    centers: np.ndarray
    cluster_of: np.ndarray
    segments: list  # (cluster, start, stop) in stream positions
    humans: list = field(default_factory=list)

    @property
    def timestamps(self) -> dict:
        return {f.frame_index: f.timestamp for f in self.frames}


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def apply_murk(embedding, murk_vector, murk_level: float) -> np.ndarray:
    """Blend an embedding towards the murk direction: ``(1 - m) * e + m * u``."""
    if not 0.0 <= murk_level < 1.0:
        raise ValueError(f"murk_level must lie in [0, 1), got {murk_level!r}")
    e = np.asarray(embedding, dtype=np.float64)
    if murk_level == 0.0:
        return e.copy()
    return (1.0 - murk_level) * e + murk_level * np.asarray(murk_vector, dtype=np.float64)


def _make_world(spec: SynthSpec, rng: np.random.Generator):
    """Semantic axis, scene direction, cluster centres and murk vector."""
    d = spec.dim
    for _ in range(CENTER_RETRIES):
        basis = rng.standard_normal((spec.n_clusters + 3, d))
        axis = _unit(basis[0])
        scene = basis[1] - np.dot(basis[1], axis) * axis
        scene = _unit(scene)
        murk = _unit(basis[2])
        raw = basis[3:]
        # keep cluster identity orthogonal to the semantic axis, then add the planted component
        raw = raw - np.outer(raw @ axis, axis)
        raw = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        signs = np.array([spec.target_strength] * spec.n_targets + [-spec.distractor_strength] * spec.n_distractors)
        centers = raw + signs[:, None] * axis
        centers = centers / np.linalg.norm(centers, axis=1, keepdims=True)
        cos = centers @ centers.T
        np.fill_diagonal(cos, -1.0)
        if spec.n_clusters < 2 or cos.max() <= spec.max_center_cosine:
            return axis, scene, centers, murk
    raise ConfigError(
        f"could not place {spec.n_clusters} centres with pairwise cosine <= {spec.max_center_cosine} "
        f"after {CENTER_RETRIES} attempts"
    )


def _make_schedule(spec: SynthSpec, rng: np.random.Generator) -> list:
    segments = []
    pos = 0
    prev = None
    while pos < spec.n_frames:
        order = rng.permutation(spec.n_clusters)
        if prev is not None and len(order) > 1 and order[0] == prev:
            order = np.roll(order, -1)
        for c in order:
            if pos >= spec.n_frames:
                break
            dwell = int(rng.integers(spec.dwell_min, spec.dwell_max + 1))
            stop = min(spec.n_frames, pos + dwell)
            segments.append((int(c), pos, stop))
            pos = stop
            prev = int(c)
    return segments


def make_queries(spec: SynthSpec, axis: np.ndarray, scene: np.ndarray) -> QuerySet:
    pos = _unit(scene + spec.query_margin * axis)
    neg = _unit(scene - spec.query_margin * axis)
    return QuerySet(pos, (neg,))


def synthetic_humans(spec: SynthSpec, segments: list, rng: np.random.Generator) -> list[HumanSampleSet]:
    by_cluster: dict[int, list] = {}
    for c, start, stop in segments:
        if c < spec.n_targets:
            by_cluster.setdefault(c, []).append((start, stop))
    present = sorted(by_cluster)
    k = min(spec.capacity, spec.n_frames)
    humans = []
    for h in range(spec.n_humans):
        picks: list[int] = []
        for j in range(k):
            if present:
                c = present[j % len(present)]
                segs = by_cluster[c]
                start, stop = segs[int(rng.integers(len(segs)))]
            else:
                start, stop = 0, spec.n_frames
            mid = 0.5 * (start + stop - 1)
            frame = int(round(mid + rng.normal(0.0, spec.human_jitter * spec.fps)))
            frame = min(max(frame, start), stop - 1)
            # keep picks distinct by walking to the nearest free frame in the segment
            step = 0
            while frame in picks and step < 2 * (stop - start):
                step += 1
                cand = frame + (step // 2 + 1) * (1 if step % 2 else -1)
                if start <= cand < stop and cand not in picks:
                    frame = cand
                    break
            picks.append(frame)
        humans.append(HumanSampleSet(f"synthetic_{h}", tuple(sorted(picks))))
    return humans


def generate_stream(spec: SynthSpec) -> SynthStream:
    """Deterministic in ``spec.seed``; see the module docstring for the model."""
    world_ss, sched_ss, noise_ss, human_ss = np.random.SeedSequence(spec.seed).spawn(4)
    axis, scene, centers, murk = _make_world(spec, np.random.default_rng(world_ss))
    segments = _make_schedule(spec, np.random.default_rng(sched_ss))
    cluster_of = np.empty(spec.n_frames, dtype=np.int64)
    for c, start, stop in segments:
        cluster_of[start:stop] = c
    noise = np.random.default_rng(noise_ss).normal(0.0, spec.noise_sigma, size=(spec.n_frames, spec.dim))
    clean = centers[cluster_of] + noise
    clean /= np.linalg.norm(clean, axis=1, keepdims=True)

    labels = {}
    frames, twins = [], []
    for pos in range(spec.n_frames):
        lab = frozenset({spec.cluster_name(int(cluster_of[pos]))})
        labels[pos] = lab
        ts = pos / spec.fps
        twins.append(FrameRecord(pos, ts, clean[pos], lab))
        frames.append(FrameRecord(pos, ts, apply_murk(clean[pos], murk, spec.murk_level), lab))

    humans = synthetic_humans(spec, segments, np.random.default_rng(human_ss))
    return SynthStream(
        spec=spec,
        frames=frames,
        clean=twins,
        labels=labels,
        queries=make_queries(spec, axis, scene),
        murk_vector=murk,
        centers=centers,
        cluster_of=cluster_of,
        segments=segments,
        humans=humans,
    )


def write_synth(stream: SynthStream, out_dir) -> dict:
    """Write all artefacts of a synthetic stream; returns name -> path."""
    from . import formats

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "stream": out / "stream.mef",
        "clean": out / "clean.mef",
        "queries": out / "queries.mef",
        "murk": out / "murk.mef",
        "labels": out / "labels.jsonl",
        "humans": out / "humans.jsonl",
        "spec": out / "synth.cfg",
    }
    formats.write_stream(stream.frames, paths["stream"])
    formats.write_stream(stream.clean, paths["clean"])
    formats.write_queries(stream.queries, paths["queries"])
    formats.write_stream([FrameRecord(0, 0.0, stream.murk_vector)], paths["murk"])
    formats.write_labels(stream.labels, paths["labels"])
    formats.write_humans(stream.humans, paths["humans"])
    paths["spec"].write_text(stream.spec.to_text())
    return paths


def baseline_uniform(stream: Sequence[FrameRecord], capacity: int) -> SampleSet:
    """K frames at evenly spaced stream positions (all frames when N <= K)."""
    frames = list(stream)
    n = len(frames)
    state = SampleSet(capacity)
    picks = range(n) if n <= capacity else [(i * n) // capacity for i in range(capacity)]
    for p in picks:
        f = frames[p]
        state.append(make_entry(f, sampler_transform(f.embedding)))
    state.offered = len(state)
    return state


def baseline_surprise_only(
    stream: Iterable[FrameRecord], capacity: int, metric: str = "euclidean", feature_norm: str = "l1"
) -> SampleSet:
    """The online sampler with the semantic gate bypassed (every frame is offered)."""
    config = SamplerConfig(capacity=capacity, distance_metric=metric, feature_norm=feature_norm)
    state = SampleSet(capacity)
    for frame in stream:
        observe(frame, sampler_transform(frame.embedding, feature_norm), state, config)
    return state
