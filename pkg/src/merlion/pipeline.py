"""End-to-end runs: gate -> (optional lazy enhancement + re-gate) -> sampler.

``run_merlion`` gates every frame against the query set and offers the
survivors to the online sampler. ``run_merlion_e`` additionally enhances
each gate-passing frame, re-scores the enhanced embedding against a second
threshold and, if it passes, samples the enhanced embedding in place of
the original. Enhancement is never requested for a frame that failed the
first gate, which is where the compute saving comes from.

The front stage (gating and enhancement) has no dependency on sampler
state, so with ``workers > 1`` it runs in a thread pool ahead of the
sampler. Results are still applied to the sample set in frame order, so
the output is identical to a single-threaded run.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .config import SamplerConfig
from .embedding import FrameRecord, QuerySet, sampler_transform
from .enhancers import Enhancer, IdentityEnhancer
from .errors import DimensionMismatchError, EnhancerError
from .gate import query_cosines, softmax_positive
from .sampler import (
    REJECTED_GATE,
    REJECTED_POST_ENHANCEMENT,
    ACCEPTED,
    SEED_FILL,
    SampleSet,
    SamplerDecision,
    observe,
)

log = logging.getLogger(__name__)


@dataclass
class PipelineStats:
    frames_seen: int = 0
    gate_passed: int = 0
    enhancement_calls: int = 0
    ses_rejections: int = 0
    enhancer_failures: int = 0
    seed_filled: int = 0
    accepted: int = 0
    trims: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class RunResult(NamedTuple):
    sample_set: SampleSet
    stats: PipelineStats
    decisions: list


class _Front(NamedTuple):
    gate: Optional[float]
    passed: bool
    embedding: Optional[np.ndarray]
    gate_enhanced: Optional[float]
    error: Optional[BaseException]
    bypass: bool


def _gate_value(embedding: np.ndarray, queries: QuerySet, scale: float) -> float:
    return softmax_positive(query_cosines(embedding, queries), scale)


def _front_stage(pos, frame, queries, config, enhancer) -> _Front:
    if frame.embedding.shape != (queries.dim,):
        raise DimensionMismatchError(
            f"stream position {pos} (frame_index {frame.frame_index}): "
            f"embedding dim {frame.embedding.shape[0]} != query dim {queries.dim}"
        )
    if config.seed_mode == "raw" and pos < config.capacity:
        return _Front(None, True, frame.embedding, None, None, True)
    score = _gate_value(frame.embedding, queries, config.softmax_scale)
    if not score > config.tau_ss:
        return _Front(score, False, None, None, None, False)
    if enhancer is None:
        return _Front(score, True, frame.embedding, None, None, False)
    try:
        enhanced = enhancer.enhance(frame)
        if np.shape(enhanced) != (queries.dim,):
            raise EnhancerError(f"enhancer returned shape {np.shape(enhanced)} for frame {frame.frame_index}")
        ses = _gate_value(enhanced, queries, config.softmax_scale)
    except EnhancerError as exc:
        return _Front(score, True, None, None, exc, False)
    return _Front(score, True, enhanced, ses, None, False)


def _iter_front(stream, queries, config, enhancer, workers: int, queue_size: int) -> Iterator[tuple]:
    if workers <= 1:
        for pos, frame in enumerate(stream):
            yield pos, frame, _front_stage(pos, frame, queries, config, enhancer)
        return
    pending: deque = deque()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for pos, frame in enumerate(stream):
            pending.append((pos, frame, pool.submit(_front_stage, pos, frame, queries, config, enhancer)))
            if len(pending) >= queue_size:
                p, f, fut = pending.popleft()
                yield p, f, fut.result()
        while pending:
            p, f, fut = pending.popleft()
            yield p, f, fut.result()


def run_pipeline(
    stream: Iterable[FrameRecord],
    queries: QuerySet,
    config: SamplerConfig,
    enhancer: Optional[Enhancer] = None,
    *,
    workers: int = 1,
    queue_size: int = 64,
) -> RunResult:
    """Shared driver; ``enhancer=None`` is the plain gate-then-sample variant."""
    state = SampleSet(config.capacity)
    stats = PipelineStats()
    decisions: list[SamplerDecision] = []
    norm = config.feature_norm
    marks = bool(enhancer is not None and enhancer.marks_enhanced)

    for pos, frame, front in _iter_front(stream, queries, config, enhancer, workers, queue_size):
        stats.frames_seen += 1
        idx = frame.frame_index
        if front.bypass:
            dec = observe(frame, sampler_transform(frame.embedding, norm), state, config)
        else:
            if not front.passed:
                decisions.append(SamplerDecision(idx, REJECTED_GATE, gate=front.gate))
                continue
            stats.gate_passed += 1
            embedding = frame.embedding
            enhanced = False
            if enhancer is not None:
                stats.enhancement_calls += 1
                if front.error is not None:
                    if config.enhancer_failure == "abort":
                        raise EnhancerError(f"frame_index {idx}: {front.error}") from front.error
                    stats.enhancer_failures += 1
                    log.warning("enhancer failed on frame_index %d, skipping: %s", idx, front.error)
                    decisions.append(
                        SamplerDecision(idx, REJECTED_POST_ENHANCEMENT, gate=front.gate, note=f"enhancer error: {front.error}")
                    )
                    continue
                # seed-fill bypasses every test, including the post-enhancement gate
                if not state.is_seeding and not front.gate_enhanced > config.tau_ses:
                    stats.ses_rejections += 1
                    decisions.append(
                        SamplerDecision(idx, REJECTED_POST_ENHANCEMENT, gate=front.gate, gate_enhanced=front.gate_enhanced)
                    )
                    continue
                embedding = front.embedding
                enhanced = marks
            dec = observe(
                frame,
                sampler_transform(embedding, norm),
                state,
                config,
                raw_embedding=embedding,
                enhanced=enhanced,
            )
            dec.gate = front.gate
            dec.gate_enhanced = front.gate_enhanced
        if dec.action == SEED_FILL:
            stats.seed_filled += 1
        elif dec.action == ACCEPTED:
            stats.accepted += 1
            stats.trims += len(dec.trimmed_frame_indices)
        decisions.append(dec)

    return RunResult(state, stats, decisions)


def run_merlion(stream: Iterable[FrameRecord], queries: QuerySet, config: SamplerConfig) -> RunResult:
    return run_pipeline(stream, queries, config, None)


def run_merlion_e(
    stream: Iterable[FrameRecord],
    queries: QuerySet,
    config: SamplerConfig,
    enhancer: Optional[Enhancer] = None,
    *,
    workers: int = 1,
    queue_size: int = 64,
) -> RunResult:
    if enhancer is None:
        enhancer = IdentityEnhancer()
    return run_pipeline(stream, queries, config, enhancer, workers=workers, queue_size=queue_size)
