"""Query-gated online informative sampling of embedding streams."""

from .config import SamplerConfig
from .embedding import FrameRecord, QuerySet, SampleEntry, cosine_similarity, distance, sampler_transform
from .gate import GateScore, gate_score, passes_gate
from .pipeline import PipelineStats, RunResult, run_merlion, run_merlion_e
from .sampler import SampleSet, SamplerDecision, observe, pack_threshold, summary, surprise, trim_sample_set

__version__ = "0.1.0"
