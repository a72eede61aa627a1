"""On-disk formats.

Binary embedding stream (``.mef``)::

    header  : b"MEF1" | version u16 LE | dim u16 LE | 8 reserved bytes   (16 bytes)
    record  : frame_index u64 LE | timestamp f64 LE | dim x f32 LE

Text sidecars are line-delimited JSON (labels, human selections, decision
logs), a plain frame-index list (summaries) and ``key = value`` text
(stats, run configs, synthetic specs).
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .config import format_kv, parse_kv_text
from .embedding import FrameRecord, QuerySet
from .errors import StreamFormatError
from .sampler import SamplerDecision

MAGIC = b"MEF1"
VERSION = 1
HEADER = struct.Struct("<4sHH8s")
HEADER_SIZE = HEADER.size
RECORD_PREFIX = struct.Struct("<Qd")
MAX_DIM = 0xFFFF


def record_size(dim: int) -> int:
    return RECORD_PREFIX.size + 4 * dim


def _parse_header(raw: bytes, path) -> int:
    if len(raw) < HEADER_SIZE:
        raise StreamFormatError(f"truncated header ({len(raw)} of {HEADER_SIZE} bytes)", path=path, offset=len(raw))
    magic, version, dim, _reserved = HEADER.unpack(raw)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path=path, offset=0)
    if version != VERSION:
        raise StreamFormatError(f"unsupported version {version}", path=path, offset=4)
    if dim < 1:
        raise StreamFormatError("dim must be >= 1", path=path, offset=6)
    return dim


def read_header(path) -> int:
    """Return the embedding dim declared by a stream file."""
    with open(path, "rb") as fh:
        return _parse_header(fh.read(HEADER_SIZE), path)


def read_stream(path) -> Iterator[FrameRecord]:
    """Yield records lazily, one read per record.

    Any framing fault raises :class:`StreamFormatError` naming the byte
    offset of the offending record; nothing after a fault is yielded.
    """
    with open(path, "rb") as fh:
        dim = _parse_header(fh.read(HEADER_SIZE), path)
        size = record_size(dim)
        offset = HEADER_SIZE
        prev_index: Optional[int] = None
        prev_ts: Optional[float] = None
        while True:
            raw = fh.read(size)
            if not raw:
                return
            if len(raw) != size:
                raise StreamFormatError(
                    f"truncated record: {len(raw)} of {size} bytes", path=path, offset=offset
                )
            index, ts = RECORD_PREFIX.unpack_from(raw)
            if prev_index is not None and index <= prev_index:
                raise StreamFormatError(
                    f"frame_index {index} does not increase (previous {prev_index})", path=path, offset=offset
                )
            if not math.isfinite(ts):
                raise StreamFormatError(f"non-finite timestamp for frame_index {index}", path=path, offset=offset + 8)
            if prev_ts is not None and ts < prev_ts:
                raise StreamFormatError(
                    f"timestamp {ts} decreases (previous {prev_ts})", path=path, offset=offset + 8
                )
            vec = np.frombuffer(raw, dtype="<f4", offset=RECORD_PREFIX.size).astype(np.float64)
            if not np.all(np.isfinite(vec)):
                raise StreamFormatError(f"non-finite embedding value for frame_index {index}", path=path, offset=offset + 16)
            yield FrameRecord(int(index), float(ts), vec)
            prev_index, prev_ts = index, ts
            offset += size


def write_stream(records: Iterable[FrameRecord], path, dim: Optional[int] = None) -> int:
    """Write records; returns the number written.

    ``dim`` is required for an empty stream and otherwise inferred from the
    first record. Embedding values are stored as float32.
    """
    records = iter(records)
    first = next(records, None)
    if first is None:
        if dim is None:
            raise ValueError("dim is required to write an empty stream")
    else:
        if dim is not None and first.dim != dim:
            raise ValueError(f"record dim {first.dim} != declared dim {dim}")
        dim = first.dim
    if not 1 <= dim <= MAX_DIM:
        raise ValueError(f"dim {dim} outside 1..{MAX_DIM}")
    count = 0
    prev: Optional[int] = None
    tmp = Path(str(path) + ".part")
    try:
        with open(tmp, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, dim, b"\0" * 8))
            for rec in _chain(first, records):
                if rec.dim != dim:
                    raise ValueError(f"inconsistent dim at frame_index {rec.frame_index}: {rec.dim} != {dim}")
                if rec.frame_index < 0:
                    raise ValueError(f"negative frame_index {rec.frame_index}")
                if prev is not None and rec.frame_index <= prev:
                    raise ValueError(f"frame_index {rec.frame_index} does not increase (previous {prev})")
                fh.write(RECORD_PREFIX.pack(rec.frame_index, float(rec.timestamp)))
                fh.write(np.asarray(rec.embedding, dtype="<f4").tobytes())
                prev = rec.frame_index
                count += 1
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    tmp.replace(path)
    return count


def _chain(first, rest):
    if first is not None:
        yield first
    yield from rest


def read_queries(path) -> QuerySet:
    rows = [r.embedding for r in read_stream(path)]
    if len(rows) < 2:
        raise StreamFormatError(f"query file needs a positive and >= 1 negative query, found {len(rows)}", path=path)
    return QuerySet.from_rows(rows)


def write_queries(queries: QuerySet, path) -> None:
    write_stream(
        (FrameRecord(i, 0.0, row) for i, row in enumerate(queries.matrix)),
        path,
    )


def _read_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StreamFormatError(f"invalid JSON: {exc.msg}", path=path, offset=lineno, unit="line") from exc
            if not isinstance(obj, dict):
                raise StreamFormatError("expected a JSON object", path=path, offset=lineno, unit="line")
            yield lineno, obj


def _write_jsonl(rows: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_labels(path) -> dict[int, frozenset]:
    labels: dict[int, frozenset] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            idx = obj["frame_index"]
            names = obj["labels"]
        except KeyError as exc:
            raise StreamFormatError(f"missing field {exc.args[0]!r}", path=path, offset=lineno, unit="line") from None
        if not isinstance(idx, int) or idx < 0 or not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise StreamFormatError("malformed label record", path=path, offset=lineno, unit="line")
        if idx in labels:
            raise StreamFormatError(f"duplicate frame_index {idx}", path=path, offset=lineno, unit="line")
        labels[idx] = frozenset(names)
    return labels


def write_labels(labels: Mapping[int, Iterable[str]], path) -> None:
    _write_jsonl(({"frame_index": int(k), "labels": sorted(v)} for k, v in sorted(labels.items())), path)


def read_humans(path):
    from .srum import HumanSampleSet

    humans = []
    for lineno, obj in _read_jsonl(path):
        try:
            eid = obj["evaluator_id"]
            frames = obj["frame_indices"]
        except KeyError as exc:
            raise StreamFormatError(f"missing field {exc.args[0]!r}", path=path, offset=lineno, unit="line") from None
        if not isinstance(eid, str) or not isinstance(frames, list) or not all(
            isinstance(i, int) and i >= 0 for i in frames
        ):
            raise StreamFormatError("malformed evaluator record", path=path, offset=lineno, unit="line")
        humans.append(HumanSampleSet(eid, tuple(frames)))
    return humans


def write_humans(humans, path) -> None:
    _write_jsonl(({"evaluator_id": h.evaluator_id, "frame_indices": list(h.frame_indices)} for h in humans), path)


def write_decisions(decisions: Iterable[SamplerDecision], path) -> None:
    _write_jsonl((d.to_dict() for d in decisions), path)


def read_decisions(path) -> list[SamplerDecision]:
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            out.append(SamplerDecision.from_dict(obj))
        except (KeyError, ValueError, TypeError) as exc:
            raise StreamFormatError(f"malformed decision record: {exc}", path=path, offset=lineno, unit="line") from None
    return out


def write_summary(frame_indices: Iterable[int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in frame_indices:
            fh.write(f"{int(i)}\n")


def read_summary(path) -> list[int]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError:
                raise StreamFormatError(f"not a frame index: {text!r}", path=path, offset=lineno, unit="line") from None
            if value < 0:
                raise StreamFormatError(f"negative frame index {value}", path=path, offset=lineno, unit="line")
            out.append(value)
    return out


def write_kv(items: Mapping[str, object], path) -> None:
    Path(path).write_text(format_kv(items))


def read_kv(path) -> dict[str, str]:
    return parse_kv_text(Path(path).read_text(), source=str(path))
