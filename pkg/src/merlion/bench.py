"""Method comparison on synthetic streams across murk levels.

Each row is a visibility regime (a murk level plus the gate thresholds
used for it); each column a method's mean SRUM over seeds against the
synthetic evaluators, with the evaluators' own leave-one-out score as the
reference column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Optional, Sequence

from .config import SamplerConfig
from .enhancers import DemurkEnhancer
from .pipeline import PipelineStats, run_merlion, run_merlion_e
from .srum import human_benchmark, srum_against_all
from .synth import SynthSpec, baseline_surprise_only, generate_stream

MERLION = "MERLION"
MERLION_E = "MERLION-E"
SURPRISE = "surprise-only"
SURPRISE_E = "surprise-only+enhanced"
HUMAN = "Human Score"
METHODS = (MERLION, MERLION_E, SURPRISE, SURPRISE_E)

# murk level -> visibility regime naming the gate thresholds
DEFAULT_LEVELS = ((0.0, "clear"), (0.25, "moderate"), (0.5, "low"))


@dataclass
class SeedOutcome:
    murk_level: float
    regime: str
    seed: int
    scores: dict
    stats: dict = field(default_factory=dict)  # method -> PipelineStats


@dataclass
class BenchResult:
    outcomes: list
    methods: tuple = METHODS

    def levels(self) -> list:
        seen = []
        for o in self.outcomes:
            if (o.murk_level, o.regime) not in seen:
                seen.append((o.murk_level, o.regime))
        return seen

    def per_seed(self, murk_level: float, method: str) -> list:
        return [o.scores[method] for o in self.outcomes if o.murk_level == murk_level and method in o.scores]

    def mean(self, murk_level: float, method: str) -> float:
        return fmean(self.per_seed(murk_level, method))

    def format_table(self) -> str:
        cols = [*self.methods, HUMAN]
        head = f"{'murk':>5} {'regime':<9}" + "".join(f" {c:>22}" for c in cols)
        lines = [head, "-" * len(head)]
        for level, regime in self.levels():
            row = f"{level:>5.2f} {regime:<9}"
            for c in cols:
                row += f" {self.mean(level, c):>22.4f}"
            lines.append(row)
        n = len({o.seed for o in self.outcomes})
        lines.append(f"(mean SRUM over {n} seeds)")
        return "\n".join(lines)


def run_seed(
    spec: SynthSpec,
    regime: str,
    *,
    metric: str = "euclidean",
    weight: float = 0.5,
    window: Optional[float] = None,
    methods: Sequence[str] = METHODS,
) -> SeedOutcome:
    s = generate_stream(spec)
    k = spec.capacity
    timestamps = s.timestamps
    scores: dict = {}
    stats: dict[str, PipelineStats] = {}

    def score(indices) -> float:
        return srum_against_all(indices, s.humans, s.labels, timestamps, weight=weight, window=window, capacity=k)

    if MERLION in methods:
        cfg = SamplerConfig.for_regime(regime, capacity=k, distance_metric=metric)
        res = run_merlion(s.frames, s.queries, cfg)
        scores[MERLION] = score(res.sample_set.frame_indices)
        stats[MERLION] = res.stats
    if MERLION_E in methods:
        cfg = SamplerConfig.for_regime(regime, enhanced=True, capacity=k, distance_metric=metric)
        res = run_merlion_e(s.frames, s.queries, cfg, DemurkEnhancer(s.murk_vector, spec.murk_level))
        scores[MERLION_E] = score(res.sample_set.frame_indices)
        stats[MERLION_E] = res.stats
    if SURPRISE in methods:
        scores[SURPRISE] = score(baseline_surprise_only(s.frames, k, metric).frame_indices)
    if SURPRISE_E in methods:
        scores[SURPRISE_E] = score(baseline_surprise_only(s.clean, k, metric).frame_indices)
    if len(s.humans) >= 2:
        scores[HUMAN] = human_benchmark(s.humans, s.labels, timestamps, weight=weight, window=window)
    return SeedOutcome(spec.murk_level, regime, spec.seed, scores, stats)


def compare_runs(
    seeds: Iterable[int],
    levels: Sequence[tuple] = DEFAULT_LEVELS,
    base_spec: Optional[SynthSpec] = None,
    *,
    methods: Sequence[str] = METHODS,
    metric: str = "euclidean",
    weight: float = 0.5,
    window: Optional[float] = None,
) -> BenchResult:
    base = base_spec or SynthSpec()
    seeds = list(seeds)
    outcomes = []
    for level, regime in levels:
        for seed in seeds:
            spec = base.replace(seed=seed, murk_level=level)
            outcomes.append(run_seed(spec, regime, metric=metric, weight=weight, window=window, methods=methods))
    return BenchResult(outcomes, tuple(methods))
