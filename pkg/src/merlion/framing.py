"""Length-prefixed framing used by the enhancer subprocess protocol.

Each message is a 4-byte little-endian unsigned length followed by that
many payload bytes. In embedding mode the payload is ``dim`` little-endian
float32 values.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Optional

import numpy as np

HEADER = struct.Struct("<I")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 0xFFFFFFFF


class FramingError(ValueError):
    pass


def encode_frame(payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise FramingError(f"payload of {len(payload)} bytes exceeds the 32-bit length field")
    return HEADER.pack(len(payload)) + payload


def decode_header(header: bytes) -> int:
    if len(header) != HEADER_SIZE:
        raise FramingError(f"short header: {len(header)} bytes")
    return HEADER.unpack(header)[0]


def read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    """Read one framed message; ``None`` on clean EOF before a header."""
    header = read_exact(stream, HEADER_SIZE)
    if not header:
        return None
    length = decode_header(header)
    payload = read_exact(stream, length)
    if len(payload) != length:
        raise FramingError(f"truncated payload: expected {length} bytes, got {len(payload)}")
    return payload


def write_frame(stream: BinaryIO, payload: bytes) -> None:
    stream.write(encode_frame(payload))
    stream.flush()


def pack_embedding(vec) -> bytes:
    return np.asarray(vec, dtype="<f4").tobytes()


def unpack_embedding(payload: bytes, dim: Optional[int] = None) -> np.ndarray:
    if len(payload) % 4:
        raise FramingError(f"embedding payload length {len(payload)} is not a multiple of 4")
    vec = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if dim is not None and vec.shape[0] != dim:
        raise FramingError(f"expected {dim} values, got {vec.shape[0]}")
    return vec
