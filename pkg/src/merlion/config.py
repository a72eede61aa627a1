"""Sampler configuration and its key-value text representation.

A run config file is one ``key = value`` pair per line; ``#`` starts a
comment. Keys mirror :class:`SamplerConfig` fields, plus ``regime`` which
fills in the gate thresholds of a named visibility regime::

    regime = low
    capacity = 6
    distance_metric = euclidean
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .embedding import FEATURE_NORMS, METRICS
from .errors import ConfigError

# tau_ss for the gate-then-sample variant, per visibility regime
MERLION_REGIMES = {"low": 40.0, "moderate": 50.0, "clear": 70.0}
# (tau_ss, tau_ses) for the enhance-before-sampling variant
MERLION_E_REGIMES = {"low": (40.0, 70.0), "moderate": (70.0, 70.0), "clear": (70.0, 70.0)}

DEFAULT_CAPACITY = 6
SEED_MODES = ("gated", "raw")
FAILURE_POLICIES = ("skip", "abort")


@dataclass(frozen=True)
class SamplerConfig:
    capacity: int = DEFAULT_CAPACITY
    tau_ss: float = 70.0
    tau_ses: float = 70.0
    softmax_scale: float = 100.0
    distance_metric: str = "euclidean"
    srum_weight: float = 0.5
    # None -> 10% of the evaluated stream's duration
    rep_window_seconds: Optional[float] = None
    # "gated": seed-fill counts frames offered to the sampler; "raw": first K stream frames
    seed_mode: str = "gated"
    feature_norm: str = "l1"
    enhancer_failure: str = "skip"

    def __post_init__(self) -> None:
        if not isinstance(self.capacity, int) or isinstance(self.capacity, bool) or self.capacity < 1:
            raise ConfigError(f"capacity must be a positive integer, got {self.capacity!r}")
        for name in ("tau_ss", "tau_ses"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ConfigError(f"{name} must lie in [0, 100], got {v!r}")
        if not self.softmax_scale > 0.0:
            raise ConfigError(f"softmax_scale must be positive, got {self.softmax_scale!r}")
        if self.distance_metric not in METRICS:
            raise ConfigError(f"distance_metric must be one of {METRICS}, got {self.distance_metric!r}")
        if not 0.0 <= self.srum_weight <= 1.0:
            raise ConfigError(f"srum_weight must lie in [0, 1], got {self.srum_weight!r}")
        if self.rep_window_seconds is not None and not self.rep_window_seconds > 0.0:
            raise ConfigError(f"rep_window_seconds must be positive, got {self.rep_window_seconds!r}")
        if self.seed_mode not in SEED_MODES:
            raise ConfigError(f"seed_mode must be one of {SEED_MODES}, got {self.seed_mode!r}")
        if self.feature_norm not in FEATURE_NORMS:
            raise ConfigError(f"feature_norm must be one of {FEATURE_NORMS}, got {self.feature_norm!r}")
        if self.enhancer_failure not in FAILURE_POLICIES:
            raise ConfigError(f"enhancer_failure must be one of {FAILURE_POLICIES}, got {self.enhancer_failure!r}")

    def replace(self, **changes) -> "SamplerConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def for_regime(cls, regime: str, *, enhanced: bool = False, **overrides) -> "SamplerConfig":
        """Config with the gate thresholds of a visibility regime (low / moderate / clear)."""
        regime = regime.lower()
        table = MERLION_E_REGIMES if enhanced else MERLION_REGIMES
        if regime not in table:
            raise ConfigError(f"unknown regime {regime!r}; expected one of {sorted(table)}")
        if enhanced:
            tau_ss, tau_ses = table[regime]
        else:
            tau_ss = tau_ses = table[regime]
        return cls(**{"tau_ss": tau_ss, "tau_ses": tau_ses, **overrides})


_FIELD_TYPES = {
    "capacity": int,
    "tau_ss": float,
    "tau_ses": float,
    "softmax_scale": float,
    "distance_metric": str,
    "srum_weight": float,
    "rep_window_seconds": float,
    "seed_mode": str,
    "feature_norm": str,
    "enhancer_failure": str,
}


def parse_kv_text(text: str, *, source: str = "<text>") -> dict[str, str]:
    """Parse ``key = value`` lines into a dict of raw strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_kv(items: Mapping[str, object]) -> str:
    lines = []
    for key, value in items.items():
        if value is None:
            continue
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_from_mapping(raw: Mapping[str, str], *, enhanced: bool = False, source: str = "<config>") -> SamplerConfig:
    raw = dict(raw)
    values: dict[str, object] = {}
    regime = raw.pop("regime", None)
    if regime is not None:
        base = SamplerConfig.for_regime(regime, enhanced=enhanced)
        values["tau_ss"] = base.tau_ss
        values["tau_ses"] = base.tau_ses
    for key, text in raw.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        conv = _FIELD_TYPES[key]
        try:
            values[key] = conv(text)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {text!r}") from exc
    return SamplerConfig(**values)


def load_config(path, *, enhanced: bool = False) -> SamplerConfig:
    path = Path(path)
    return config_from_mapping(parse_kv_text(path.read_text(), source=str(path)), enhanced=enhanced, source=str(path))


def dump_config(config: SamplerConfig) -> str:
    return format_kv(dataclasses.asdict(config))
