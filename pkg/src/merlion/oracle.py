"""Naive offline reference run, written independently of the streaming code.

Everything here is plain Python over lists of floats: gate scores come from
a direct softmax, and surprise, packing threshold and trimming are
recomputed from scratch with exhaustive loops at every step. It is slow by
design and exists to check the streaming pipeline decision by decision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .sampler import (
    ACCEPTED,
    REJECTED_GATE,
    REJECTED_POST_ENHANCEMENT,
    REJECTED_SURPRISE,
    SEED_FILL,
    SamplerDecision,
)


def _dot(a, b):
    return math.fsum(x * y for x, y in zip(a, b))


def _cos(a, b):
    return _dot(a, b) / (math.sqrt(_dot(a, a)) * math.sqrt(_dot(b, b)))


def _gate(v, queries, scale):
    logits = [scale * _cos(v, q) for q in queries]
    top = max(logits)
    w = [math.exp(l - top) for l in logits]
    return 100.0 * w[0] / math.fsum(w)


def _transform(v, norm):
    a = [abs(x) for x in v]
    s = math.fsum(a) if norm == "l1" else math.sqrt(math.fsum(x * x for x in a))
    return [x / s for x in a]


def _dist(a, b, metric):
    if metric == "euclidean":
        return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a, b)))
    if metric == "l1":
        return math.fsum(abs(x - y) for x, y in zip(a, b))
    if metric == "cosine":
        # 1 - cos written as half the squared chord between unit vectors; the
        # direct form loses most digits for nearly parallel features
        na = math.sqrt(_dot(a, a))
        nb = math.sqrt(_dot(b, b))
        return 0.5 * math.fsum((x / na - y / nb) ** 2 for x, y in zip(a, b))
    raise ValueError(metric)


def oracle_surprise(candidate, members, metric):
    return min(_dist(candidate, m, metric) for m in members)


def oracle_gamma(members, metric):
    n = len(members)
    if n < 2:
        return 0.0
    nn = []
    for i in range(n):
        nn.append(min(_dist(members[i], members[j], metric) for j in range(n) if j != i))
    return math.fsum(nn) / n


def oracle_trim(members: list, metric) -> int:
    """Position whose removal leaves the largest packing threshold (first on ties)."""
    best_pos, best_gamma = None, None
    for r in range(len(members)):
        rest = members[:r] + members[r + 1:]
        g = oracle_gamma(rest, metric)
        if best_gamma is None or g > best_gamma:
            best_pos, best_gamma = r, g
    return best_pos


@dataclass
class OracleResult:
    frame_indices: list
    decisions: list = field(default_factory=list)


def oracle_run(
    stream: Iterable,
    queries: Sequence,
    config,
    enhance: Optional[Callable] = None,
) -> OracleResult:
    """Replay the selection algorithm offline.

    ``stream`` yields FrameRecords; ``queries`` is a QuerySet or a sequence
    of query vectors with the positive first; ``enhance`` maps a
    FrameRecord to an enhanced embedding (enhance-before-sampling variant).
    """
    qs = [list(map(float, q)) for q in getattr(queries, "matrix", queries)]
    K = config.capacity
    metric = config.distance_metric
    members: list = []  # (frame_index, feature)
    offered = 0
    decisions = []
    for pos, frame in enumerate(stream):
        v = [float(x) for x in frame.embedding]
        idx = frame.frame_index
        gate = gate_e = None
        if config.seed_mode == "raw" and pos < K:
            pass
        else:
            gate = _gate(v, qs, config.softmax_scale)
            if not gate > config.tau_ss:
                decisions.append(SamplerDecision(idx, REJECTED_GATE, gate=gate))
                continue
            if enhance is not None:
                e = [float(x) for x in enhance(frame)]
                gate_e = _gate(e, qs, config.softmax_scale)
                if offered >= K and not gate_e > config.tau_ses:
                    decisions.append(SamplerDecision(idx, REJECTED_POST_ENHANCEMENT, gate=gate, gate_enhanced=gate_e))
                    continue
                v = e
        feat = _transform(v, config.feature_norm)
        if offered < K:
            offered += 1
            members.append((idx, feat))
            decisions.append(SamplerDecision(idx, SEED_FILL, gate=gate, gate_enhanced=gate_e))
            continue
        offered += 1
        feats = [f for _, f in members]
        alpha = oracle_surprise(feat, feats, metric)
        gamma = oracle_gamma(feats, metric)
        if alpha > gamma:
            members.append((idx, feat))
            trimmed = []
            while len(members) > K:
                r = oracle_trim([f for _, f in members], metric)
                trimmed.append(members.pop(r)[0])
            decisions.append(SamplerDecision(idx, ACCEPTED, alpha, gamma, tuple(trimmed), gate=gate, gate_enhanced=gate_e))
        else:
            decisions.append(SamplerDecision(idx, REJECTED_SURPRISE, alpha, gamma, gate=gate, gate_enhanced=gate_e))
    return OracleResult([i for i, _ in members], decisions)


def _close(a, b, rel_tol):
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(a, b, rel_tol=rel_tol, abs_tol=1e-12)


def diff_decisions(logged: Sequence[SamplerDecision], reference: Sequence[SamplerDecision], rel_tol: float = 1e-9) -> list[str]:
    """Human-readable differences between a decision log and the reference; empty when they agree."""
    problems = []
    if len(logged) != len(reference):
        problems.append(f"log has {len(logged)} decisions, reference has {len(reference)}")
    for got, want in zip(logged, reference):
        where = f"frame_index {want.frame_index}"
        if got.frame_index != want.frame_index:
            problems.append(f"{where}: log has frame_index {got.frame_index}")
            break
        if got.action != want.action:
            problems.append(f"{where}: action {got.action} != {want.action}")
        if tuple(got.trimmed_frame_indices) != tuple(want.trimmed_frame_indices):
            problems.append(f"{where}: trimmed {list(got.trimmed_frame_indices)} != {list(want.trimmed_frame_indices)}")
        for name in ("alpha", "gamma", "gate", "gate_enhanced"):
            if not _close(getattr(got, name), getattr(want, name), rel_tol):
                problems.append(f"{where}: {name} {getattr(got, name)!r} != {getattr(want, name)!r}")
    return problems
