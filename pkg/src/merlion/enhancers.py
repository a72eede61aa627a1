"""Enhancer plug-ins for the enhance-before-sampling pipeline.

An enhancer maps a frame to an enhanced embedding. Enhancement itself
happens out of band: either as a second precomputed embedding stream, an
analytic inverse of the synthetic murk model, or an external process
speaking the length-prefixed protocol in :mod:`merlion.framing`.
"""

from __future__ import annotations

import logging
import os
import selectors
import shlex
import subprocess
import threading
import time
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .embedding import FrameRecord, as_embedding
from .errors import EnhancerError
from .framing import HEADER_SIZE, decode_header, encode_frame, pack_embedding, unpack_embedding

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 5.0


def mock_demurk(embedding, murk_vector, murk_level: float) -> np.ndarray:
    """Invert the synthetic murk blend ``(1 - m) * clean + m * murk``."""
    if not 0.0 <= murk_level < 1.0:
        raise ValueError(f"murk_level must lie in [0, 1), got {murk_level!r}")
    e = np.asarray(embedding, dtype=np.float64)
    u = np.asarray(murk_vector, dtype=np.float64)
    if murk_level == 0.0:
        return e.copy()
    return (e - murk_level * u) / (1.0 - murk_level)


class Enhancer:
    kind = "none"
    # whether output entries should be flagged as enhanced
    marks_enhanced = True

    def enhance(self, frame: FrameRecord) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class IdentityEnhancer(Enhancer):
    kind = "none"
    marks_enhanced = False

    def enhance(self, frame: FrameRecord) -> np.ndarray:
        return frame.embedding


class DemurkEnhancer(Enhancer):
    kind = "mock_demurk"

    def __init__(self, murk_vector, murk_level: float) -> None:
        if not 0.0 <= murk_level < 1.0:
            raise ValueError(f"murk_level must lie in [0, 1), got {murk_level!r}")
        self.murk_vector = as_embedding(murk_vector)
        self.murk_level = float(murk_level)

    def enhance(self, frame: FrameRecord) -> np.ndarray:
        return mock_demurk(frame.embedding, self.murk_vector, self.murk_level)


class AlignedStreamEnhancer(Enhancer):
    """Looks up a precomputed enhanced embedding by frame_index."""

    kind = "aligned_stream"

    def __init__(self, records: Mapping[int, np.ndarray] | Iterable[FrameRecord]) -> None:
        if isinstance(records, Mapping):
            self._table = {int(k): as_embedding(v) for k, v in records.items()}
        else:
            self._table = {r.frame_index: r.embedding for r in records}

    def enhance(self, frame: FrameRecord) -> np.ndarray:
        try:
            return self._table[frame.frame_index]
        except KeyError:
            raise EnhancerError(f"no enhanced embedding for frame_index {frame.frame_index}") from None


class SubprocessEnhancer(Enhancer):
    """Enhancer backed by a child process speaking the framed protocol.

    Requests are serialized (one in flight). A timeout or protocol fault
    raises :class:`EnhancerError` and kills the child; it is restarted on
    the next request.
    """

    kind = "subprocess"

    def __init__(self, command: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT, env: Optional[dict] = None) -> None:
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("empty enhancer command")
        self.timeout = timeout
        self.env = env
        self._proc: Optional[subprocess.Popen] = None
        self._lock = threading.Lock()

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    env=self.env,
                    bufsize=0,
                )
            except OSError as exc:
                raise EnhancerError(f"cannot start enhancer {self.command!r}: {exc}") from exc
        return self._proc

    def _read_exact(self, fd: int, n: int, deadline: float) -> bytes:
        buf = bytearray()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while len(buf) < n:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not sel.select(remaining):
                    raise EnhancerError(f"enhancer timed out after {self.timeout:g} s")
                chunk = os.read(fd, n - len(buf))
                if not chunk:
                    raise EnhancerError("enhancer closed its output mid-response")
                buf.extend(chunk)
        return bytes(buf)

    def request(self, payload: bytes) -> bytes:
        """Send one framed payload and return the framed response payload."""
        with self._lock:
            proc = self._ensure_started()
            deadline = time.monotonic() + self.timeout
            try:
                proc.stdin.write(encode_frame(payload))
                proc.stdin.flush()
                fd = proc.stdout.fileno()
                length = decode_header(self._read_exact(fd, HEADER_SIZE, deadline))
                return self._read_exact(fd, length, deadline)
            except (EnhancerError, OSError, ValueError) as exc:
                self._kill()
                if isinstance(exc, EnhancerError):
                    raise
                raise EnhancerError(f"enhancer protocol failure: {exc}") from exc

    def enhance(self, frame: FrameRecord) -> np.ndarray:
        out = self.request(pack_embedding(frame.embedding))
        try:
            vec = unpack_embedding(out, frame.dim)
        except ValueError as exc:
            raise EnhancerError(str(exc)) from exc
        if not np.all(np.isfinite(vec)):
            raise EnhancerError(f"enhancer returned non-finite values for frame {frame.frame_index}")
        return vec

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=1.0)
            except Exception:  # best effort; the process may already be gone
                pass
            for pipe in (self._proc.stdin, self._proc.stdout):
                if pipe is not None:
                    pipe.close()
            self._proc = None

    def close(self) -> None:
        with self._lock:
            if self._proc is None:
                return
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=1.0)
            except Exception:
                log.debug("enhancer did not exit on EOF; killing")
            self._kill()
