"""Command-line entry point.

Exit codes: 0 success, 1 ``oracle`` mismatch, 2 usage/parse/config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import formats
from .bench import DEFAULT_LEVELS, compare_runs
from .config import SamplerConfig, config_from_mapping, dump_config, parse_kv_text
from .enhancers import AlignedStreamEnhancer, DemurkEnhancer, Enhancer, IdentityEnhancer, SubprocessEnhancer
from .errors import ConfigError, MerlionError, StreamFormatError
from .framing import FramingError
from .oracle import diff_decisions, oracle_run
from .pipeline import run_merlion, run_merlion_e
from .sampler import ACCEPTED, SEED_FILL
from .srum import default_window, human_benchmark, srum_score
from .synth import SynthSpec, generate_stream, write_synth

log = logging.getLogger("merlion")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


def _add_sampler_flags(p: argparse.ArgumentParser, enhanced: bool) -> None:
    p.add_argument("--stream", required=True, help="MEF1 embedding stream")
    p.add_argument("--queries", required=True, help="MEF1 file: positive query first, then negatives")
    p.add_argument("--config", help="key = value run config file")
    p.add_argument("--regime", choices=["low", "moderate", "clear"], help="visibility regime presets for the thresholds")
    p.add_argument("--tau-ss", type=float)
    p.add_argument("--capacity", type=int)
    p.add_argument("--metric", choices=["euclidean", "cosine", "l1"])
    p.add_argument("--scale", type=float, help="softmax scale applied to query cosines")
    p.add_argument("--seed-mode", choices=["gated", "raw"])
    p.add_argument("--feature-norm", choices=["l1", "l2"])
    if enhanced:
        p.add_argument("--tau-ses", type=float)
        p.add_argument(
            "--enhancer",
            required=True,
            help="aligned:PATH | subprocess:CMD | demurk | none",
        )
        p.add_argument("--murk", help="MEF1 file holding the murk vector (demurk enhancer)")
        p.add_argument("--murk-level", type=float, help="murk level (demurk enhancer)")
        p.add_argument("--enhancer-timeout", type=float, default=5.0)
        p.add_argument("--on-enhancer-failure", choices=["skip", "abort"])
        p.add_argument("--workers", type=int, default=1, help="threads for the gate/enhance stage")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="merlion", description="Query-gated online informative sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="gate-then-sample run over an embedding stream")
    _add_sampler_flags(p, enhanced=False)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("run-e", help="run with lazy enhancement of gate-passing frames")
    _add_sampler_flags(p, enhanced=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="score a summary against human selections")
    p.add_argument("--auto", required=True, help="summary file (one frame index per line)")
    p.add_argument("--humans", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--stream", required=True, help="stream providing frame timestamps")
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--window", type=float, help="representative window in seconds (default 10%% of duration)")
    p.add_argument("--capacity", type=int, help="K (default: the human selection size)")
    p.add_argument("--evaluator", help="score against this evaluator only")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("synth", help="generate a synthetic labelled stream")
    p.add_argument("--spec", help="key = value synthetic spec file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-frames", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--murk-level", type=float)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any spec key")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("oracle", help="re-run the offline reference and diff against a decision log")
    _add_sampler_flags(p, enhanced=False)
    p.add_argument("--log", required=True, help="decision log written by run / run-e")
    p.add_argument("--tau-ses", type=float)
    p.add_argument("--enhancer", help="aligned:PATH | demurk | none (enhanced runs only)")
    p.add_argument("--murk")
    p.add_argument("--murk-level", type=float)

    p = sub.add_parser("bench", help="compare methods on synthetic streams")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed-start", type=int, default=0)
    p.add_argument("--levels", default=",".join(f"{m}:{r}" for m, r in DEFAULT_LEVELS), help="murk:regime,...")
    p.add_argument("--spec", help="base synthetic spec file")
    p.add_argument("--metric", choices=["euclidean", "cosine", "l1"], default="euclidean")
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--out", help="also write the table here")
    return parser


def resolve_config(args, enhanced: bool) -> SamplerConfig:
    raw = parse_kv_text(Path(args.config).read_text(), source=args.config) if args.config else {}
    if args.regime:
        raw["regime"] = args.regime
    cfg = config_from_mapping(raw, enhanced=enhanced, source=args.config or "<flags>")
    overrides = {
        "tau_ss": args.tau_ss,
        "capacity": args.capacity,
        "distance_metric": args.metric,
        "softmax_scale": args.scale,
        "seed_mode": args.seed_mode,
        "feature_norm": args.feature_norm,
        "tau_ses": getattr(args, "tau_ses", None),
        "enhancer_failure": getattr(args, "on_enhancer_failure", None),
    }
    return cfg.replace(**{k: v for k, v in overrides.items() if v is not None})


def make_enhancer(spec: str, args) -> Enhancer:
    kind, _, arg = spec.partition(":")
    if kind in ("none", "identity"):
        return IdentityEnhancer()
    if kind == "aligned":
        if not arg:
            raise UsageError("aligned enhancer needs a path: aligned:PATH")
        return AlignedStreamEnhancer(formats.read_stream(arg))
    if kind == "subprocess":
        if not arg:
            raise UsageError("subprocess enhancer needs a command: subprocess:CMD")
        return SubprocessEnhancer(arg, timeout=getattr(args, "enhancer_timeout", 5.0))
    if kind == "demurk":
        if not args.murk or args.murk_level is None:
            raise UsageError("demurk enhancer needs --murk and --murk-level")
        murk = next(iter(formats.read_stream(args.murk)), None)
        if murk is None:
            raise StreamFormatError("murk file holds no record", path=args.murk)
        try:
            return DemurkEnhancer(murk.embedding, args.murk_level)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise UsageError(f"unknown enhancer {spec!r}")


def _write_run(out: Path, result, config: SamplerConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    formats.write_decisions(result.decisions, out / "decisions.jsonl")
    formats.write_summary(result.sample_set.frame_indices, out / "summary.txt")
    formats.write_kv(result.stats.to_dict(), out / "stats.txt")
    (out / "config.txt").write_text(dump_config(config))


def cmd_run(args, enhanced: bool) -> int:
    config = resolve_config(args, enhanced)
    queries = formats.read_queries(args.queries)
    stream = formats.read_stream(args.stream)
    if enhanced:
        with make_enhancer(args.enhancer, args) as enhancer:
            result = run_merlion_e(stream, queries, config, enhancer, workers=args.workers)
    else:
        result = run_merlion(stream, queries, config)
    _write_run(Path(args.out), result, config)
    print(" ".join(str(i) for i in result.sample_set.frame_indices))
    return EXIT_OK


def _final_set_from_log(decisions) -> list[int]:
    members: list[int] = []
    for d in decisions:
        if d.action in (SEED_FILL, ACCEPTED):
            members.append(d.frame_index)
        for t in d.trimmed_frame_indices:
            members.remove(t)
    return members


def cmd_oracle(args) -> int:
    enhanced = bool(args.enhancer)
    config = resolve_config(args, enhanced)
    queries = formats.read_queries(args.queries)
    logged = formats.read_decisions(args.log)
    enhance = None
    if enhanced:
        kind = args.enhancer.partition(":")[0]
        if kind == "subprocess":
            raise UsageError("the oracle cannot replay a subprocess enhancer; use aligned:PATH")
        enhance = make_enhancer(args.enhancer, args).enhance
    ref = oracle_run(formats.read_stream(args.stream), queries, config, enhance)
    problems = diff_decisions(logged, ref.decisions)
    try:
        logged_set = _final_set_from_log(logged)
    except ValueError:
        problems.append("decision log trims a frame that was never admitted")
        logged_set = None
    if logged_set is not None and logged_set != ref.frame_indices:
        problems.append(f"final set {logged_set} != reference {ref.frame_indices}")
    if problems:
        print("MISMATCH")
        for line in problems[:20]:
            print(f"  {line}")
        return EXIT_MISMATCH
    print("MATCH")
    return EXIT_OK


def format_report(reports: dict, human_score: Optional[float]) -> str:
    lines = []
    for evaluator, rep in reports.items():
        lines.append(f"[{evaluator}]")
        lines.append(f"total = {rep.total!r}")
        lines.append(f"weight = {rep.weight!r}")
        lines.append(f"window = {rep.window!r}")
        lines.append(f"padded = {rep.padded}")
        for f in rep.frames:
            idx = "-" if f.frame_index is None else f.frame_index
            matched = "-" if f.matched_human_frame is None else f.matched_human_frame
            lines.append(
                f"frame {idx}: semantic={f.semantic} representative={f.representative!r} matched={matched}"
            )
        lines.append("")
    mean_total = sum(r.total for r in reports.values()) / len(reports)
    lines.append("[summary]")
    lines.append(f"mean_total = {mean_total!r}")
    if human_score is not None:
        lines.append(f"human_score = {human_score!r}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    auto = formats.read_summary(args.auto)
    humans = formats.read_humans(args.humans)
    labels = formats.read_labels(args.labels)
    timestamps = {r.frame_index: r.timestamp for r in formats.read_stream(args.stream)}
    if not humans:
        raise ConfigError(f"{args.humans}: no evaluator records")
    for frame in [*auto, *(i for h in humans for i in h.frame_indices)]:
        if frame not in timestamps:
            raise ConfigError(f"frame_index {frame} is not in {args.stream}")
        if frame not in labels:
            raise ConfigError(f"frame_index {frame} has no record in {args.labels}")
    window = args.window if args.window is not None else default_window(timestamps)
    targets = humans
    if args.evaluator is not None:
        targets = [h for h in humans if h.evaluator_id == args.evaluator]
        if not targets:
            raise ConfigError(f"no evaluator {args.evaluator!r} in {args.humans}")
    reports = {}
    for h in targets:
        try:
            reports[h.evaluator_id] = srum_score(
                auto, h, labels, timestamps, weight=args.weight, window=window, capacity=args.capacity
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    human = human_benchmark(humans, labels, timestamps, weight=args.weight, window=window) if len(humans) >= 2 else None
    text = format_report(reports, human)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    raw = parse_kv_text(Path(args.spec).read_text(), source=args.spec) if args.spec else {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        raw[key.strip()] = value.strip()
    for key, value in (("seed", args.seed), ("n_frames", args.n_frames), ("dim", args.dim), ("murk_level", args.murk_level)):
        if value is not None:
            raw[key] = str(value)
    spec = SynthSpec.from_mapping(raw)
    paths = write_synth(generate_stream(spec), args.out)
    for name, path in paths.items():
        print(f"{name} = {path}")
    return EXIT_OK


def _parse_levels(text: str) -> list[tuple]:
    levels = []
    for item in text.split(","):
        level, sep, regime = item.strip().partition(":")
        if not sep:
            raise UsageError(f"--levels expects murk:regime pairs, got {item!r}")
        try:
            levels.append((float(level), regime))
        except ValueError:
            raise UsageError(f"bad murk level {level!r}") from None
    return levels


def cmd_bench(args) -> int:
    base = SynthSpec.from_text(Path(args.spec).read_text(), args.spec) if args.spec else SynthSpec()
    levels = _parse_levels(args.levels)
    for _, regime in levels:
        SamplerConfig.for_regime(regime)
    result = compare_runs(
        range(args.seed_start, args.seed_start + args.seeds), levels, base, metric=args.metric, weight=args.weight
    )
    text = result.format_table() + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def _setup_logging() -> None:
    level = os.environ.get("MERLION_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return cmd_run(args, enhanced=False)
        if args.command == "run-e":
            return cmd_run(args, enhanced=True)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "oracle":
            return cmd_oracle(args)
        if args.command == "bench":
            return cmd_bench(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"merlion: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, StreamFormatError, FramingError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"merlion: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MerlionError, OSError, ValueError, KeyError) as exc:
        print(f"merlion: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
