import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from merlion.embedding import QuerySet
from merlion.errors import DegenerateEmbeddingError, DimensionMismatchError
from merlion.gate import GateScore, gate_score, passes_gate, softmax_positive


def mp_gate(cosines, scale):
    """100 x softmax weight of the first cosine, at 50 significant digits."""
    with mpmath.workdps(50):
        logits = [mpmath.mpf(scale) * mpmath.mpf(c) for c in cosines]
        return float(100 * mpmath.exp(logits[0]) / mpmath.fsum(mpmath.exp(l) for l in logits))


def frame_with_cosines(cosines):
    """Orthonormal queries e_1..e_M and a unit frame whose cosine with e_i is cosines[i]."""
    m = len(cosines)
    rest = 1.0 - sum(c * c for c in cosines)
    frame = np.array([*cosines, math.sqrt(max(rest, 0.0))])
    queries = QuerySet.from_rows(np.eye(m + 1)[:m])
    return frame, queries


def test_dominant_positive_query():
    q = QuerySet(np.array([1.0, 0.0]), (np.array([0.0, 1.0]),))
    assert gate_score(np.array([1.0, 0.0]), q).value == pytest.approx(100.0, abs=1e-6)


def test_symmetric_frame_scores_exactly_fifty():
    q = QuerySet(np.array([1.0, 1.0]), (np.array([1.0, -1.0]),))
    for scale in (1.0, 37.5, 100.0):
        assert gate_score(np.array([1.0, 0.0]), q, scale).value == 50.0


def test_three_query_case_matches_high_precision():
    frame, q = frame_with_cosines([0.30, 0.25, 0.20])
    score = gate_score(frame, q, 100.0)
    expected = mp_gate([0.30, 0.25, 0.20], 100)
    assert score.value == pytest.approx(expected, rel=1e-9)
    # softmax over logits 30, 25, 20
    assert expected == pytest.approx(99.32623568421744, rel=1e-12)


@pytest.mark.parametrize(
    "value, tau, expected",
    [(70.0, 70, False), (70.01, 70, True), (39.9, 40, False), (40.0, 40, False), (50.5, 50, True)],
)
def test_threshold_is_strict(value, tau, expected):
    assert passes_gate(value, tau) is expected


def test_passes_gate_accepts_score_object():
    s = GateScore(value=71.0, positive_cosine=0.3, per_query_cosines=(0.3, 0.2))
    assert passes_gate(s, 70)
    assert not passes_gate(s, 71)


def test_errors():
    q = QuerySet(np.array([1.0, 0.0]), (np.array([0.0, 1.0]),))
    with pytest.raises(DegenerateEmbeddingError):
        gate_score(np.zeros(2), q)
    with pytest.raises(DimensionMismatchError):
        gate_score(np.ones(3), q)
    with pytest.raises(ValueError):
        gate_score(np.ones(2), q, scale=0.0)


def test_extreme_logits_do_not_overflow():
    assert softmax_positive(np.array([1.0, -1.0]), 1e4) == 100.0
    assert softmax_positive(np.array([-1.0, 1.0]), 1e4) == 0.0


cos_lists = st.lists(st.floats(-0.5, 0.5), min_size=2, max_size=6)
scales = st.floats(0.1, 200.0)


@given(cos_lists, scales)
def test_components_form_distribution(cosines, scale):
    frame, q = frame_with_cosines(cosines)
    comps = gate_score(frame, q, scale).components
    assert math.isclose(comps.sum(), 1.0, abs_tol=1e-9)
    assert np.all((comps >= 0) & (comps <= 1))


@given(cos_lists, scales)
def test_value_in_range_and_matches_oracle(cosines, scale):
    frame, q = frame_with_cosines(cosines)
    v = gate_score(frame, q, scale).value
    assert 0.0 <= v <= 100.0
    assert v == pytest.approx(mp_gate(gate_score(frame, q, scale).per_query_cosines, scale), rel=1e-9, abs=1e-300)


@given(cos_lists, scales, st.floats(0.001, 0.2))
def test_monotone_in_positive_cosine(cosines, scale, bump):
    assume(cosines[0] + bump <= 0.5)
    lo = softmax_positive(np.array(cosines), scale)
    hi = softmax_positive(np.array([cosines[0] + bump, *cosines[1:]]), scale)
    assert hi >= lo


@given(cos_lists, scales)
def test_argmax_query_has_largest_component(cosines, scale):
    frame, q = frame_with_cosines(cosines)
    s = gate_score(frame, q, scale)
    comps = s.components
    top = int(np.argmax(s.per_query_cosines))
    assert comps[top] == comps.max()


@given(cos_lists, st.floats(-0.5, 0.5), scales)
def test_extra_negative_never_increases_value(cosines, extra, scale):
    before = softmax_positive(np.array(cosines), scale)
    after = softmax_positive(np.array([*cosines, extra]), scale)
    assert after <= before * (1 + 1e-12)
