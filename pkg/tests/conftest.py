import numpy as np
import pytest

from merlion.embedding import FrameRecord, SampleEntry, sampler_transform
from merlion.sampler import SampleSet

_acceptance_results = []


def make_frames(embeddings, fps=5.0, labels=None):
    return [
        FrameRecord(i, i / fps, np.asarray(e, dtype=np.float64), None if labels is None else labels[i])
        for i, e in enumerate(embeddings)
    ]


def make_set(features, capacity=None, start=0):
    """SampleSet holding the given (already transformed) features, frame indices start, start+1, ..."""
    features = [np.asarray(f, dtype=np.float64) for f in features]
    state = SampleSet(capacity if capacity is not None else max(1, len(features)))
    for i, f in enumerate(features):
        state.append(SampleEntry(start + i, float(start + i), f, f))
    state.offered = len(features)
    state.last_offered_index = start + len(features) - 1 if features else None
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
