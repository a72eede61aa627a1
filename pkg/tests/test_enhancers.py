import io
import sys

import numpy as np
import pytest

from merlion.embedding import FrameRecord
from merlion.enhancers import SubprocessEnhancer, mock_demurk
from merlion.errors import EnhancerError
from merlion.formats import write_stream
from merlion.framing import (
    FramingError,
    encode_frame,
    pack_embedding,
    read_frame,
    unpack_embedding,
    write_frame,
)

WORKER = [sys.executable, "-m", "merlion.enhance_worker"]


class TestFraming:
    def test_layout(self):
        assert encode_frame(b"abc") == b"\x03\x00\x00\x00abc"

    def test_round_trip_sequence(self):
        buf = io.BytesIO()
        for p in (b"", b"x", b"hello" * 100):
            write_frame(buf, p)
        buf.seek(0)
        assert [read_frame(buf) for _ in range(4)] == [b"", b"x", b"hello" * 100, None]

    def test_truncated_payload(self):
        with pytest.raises(FramingError):
            read_frame(io.BytesIO(encode_frame(b"hello")[:-2]))

    def test_truncated_header(self):
        with pytest.raises(FramingError):
            read_frame(io.BytesIO(b"\x05\x00"))

    def test_embedding_payload(self):
        v = np.array([0.5, -1.25, 3.0])
        payload = pack_embedding(v)
        assert payload == np.array(v, dtype="<f4").tobytes()
        np.testing.assert_array_equal(unpack_embedding(payload, 3), v)
        with pytest.raises(ValueError):
            unpack_embedding(payload, 4)


def frame(vec, i=0):
    return FrameRecord(i, 0.0, np.asarray(vec, dtype=np.float64))


class TestSubprocessEnhancer:
    def test_echo_worker(self):
        with SubprocessEnhancer([*WORKER, "--echo"]) as enh:
            for i in range(5):
                v = np.array([0.25 * i, -1.0, 2.0])
                np.testing.assert_array_equal(enh.enhance(frame(v, i)), v)

    def test_demurk_worker(self, tmp_path, rng):
        u = rng.normal(size=8)
        u /= np.linalg.norm(u)
        write_stream([FrameRecord(0, 0.0, u)], tmp_path / "murk.mef")
        v = rng.normal(size=8)
        with SubprocessEnhancer([*WORKER, "--murk", str(tmp_path / "murk.mef"), "--level", "0.5"]) as enh:
            got = enh.enhance(frame(v))
        u32 = u.astype(np.float32).astype(np.float64)
        v32 = v.astype(np.float32).astype(np.float64)
        np.testing.assert_allclose(got, mock_demurk(v32, u32, 0.5), rtol=1e-6, atol=1e-6)

    def test_timeout_kills_and_restarts(self):
        enh = SubprocessEnhancer([*WORKER, "--echo", "--delay", "2"], timeout=0.3)
        try:
            with pytest.raises(EnhancerError, match="timed out"):
                enh.enhance(frame([1.0, 2.0]))
            assert enh._proc is None
        finally:
            enh.close()

    def test_missing_command(self):
        enh = SubprocessEnhancer(["/nonexistent/enhancer-binary"])
        with pytest.raises(EnhancerError, match="cannot start"):
            enh.enhance(frame([1.0]))

    def test_worker_exits_early(self):
        enh = SubprocessEnhancer([sys.executable, "-c", "pass"], timeout=2.0)
        try:
            with pytest.raises(EnhancerError):
                enh.enhance(frame([1.0]))
        finally:
            enh.close()

    def test_wrong_length_reply(self):
        code = (
            "import sys;from merlion.framing import read_frame,write_frame\n"
            "while read_frame(sys.stdin.buffer) is not None: write_frame(sys.stdout.buffer, b'1234')"
        )
        with SubprocessEnhancer([sys.executable, "-c", code]) as enh:
            with pytest.raises(EnhancerError):
                enh.enhance(frame([1.0, 2.0]))

    def test_empty_command(self):
        with pytest.raises(ValueError):
            SubprocessEnhancer("")
