"""Reference enhancer process for the framed stdin/stdout protocol.

    python -m merlion.enhance_worker --murk murk.mef --level 0.5
    python -m merlion.enhance_worker --echo

With ``--murk`` each request payload is read as little-endian float32
embedding values and answered with the de-murked embedding. ``--echo``
returns every payload unchanged (raw frame bytes pass-through).
``--delay`` sleeps before each reply, for exercising client timeouts.
"""

from __future__ import annotations

import argparse
import sys
import time

from .enhancers import mock_demurk
from .framing import pack_embedding, read_frame, unpack_embedding, write_frame


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="merlion-enhance-worker")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--murk", help="MEF1 file whose first record is the murk vector")
    mode.add_argument("--echo", action="store_true")
    parser.add_argument("--level", type=float, default=0.0)
    parser.add_argument("--delay", type=float, default=0.0)
    args = parser.parse_args(argv)

    murk = None
    if args.murk:
        from .formats import read_stream

        murk = next(iter(read_stream(args.murk))).embedding

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    while True:
        payload = read_frame(stdin)
        if payload is None:
            return 0
        if args.delay:
            time.sleep(args.delay)
        if murk is None:
            write_frame(stdout, payload)
        else:
            vec = unpack_embedding(payload, murk.shape[0])
            write_frame(stdout, pack_embedding(mock_demurk(vec, murk, args.level)))


if __name__ == "__main__":
    sys.exit(main())
