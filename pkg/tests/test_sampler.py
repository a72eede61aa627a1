import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_frames, make_set
from merlion.config import SamplerConfig
from merlion.embedding import FrameRecord, sampler_transform
from merlion.errors import SamplerStateError
from merlion.oracle import oracle_gamma, oracle_run, oracle_surprise, oracle_trim
from merlion.sampler import (
    ACCEPTED,
    REJECTED_SURPRISE,
    SEED_FILL,
    SampleSet,
    SamplerDecision,
    observe,
    pack_threshold,
    summary,
    surprise,
    trim_sample_set,
)

METRICS = ["euclidean", "cosine", "l1"]


def frame(i, vec):
    return FrameRecord(i, float(i), np.asarray(vec, dtype=np.float64))


class TestSurprise:
    def test_candidate_equal_to_entry(self):
        assert surprise([0.3, 0.7], make_set([[0.1, 0.9], [0.3, 0.7]])) == 0.0

    def test_two_entry_example_matches_exhaustive_loop(self):
        feats = [[1.0, 0.0], [0.0, 1.0]]
        got = surprise([0.8, 0.2], make_set(feats))
        want = oracle_surprise([0.8, 0.2], feats, "euclidean")
        assert got == pytest.approx(want, rel=1e-15)
        assert got == pytest.approx(math.sqrt(0.08), rel=1e-15)

    def test_singleton(self):
        assert surprise([0.3, 0.0], make_set([[0.0, 0.0]])) == pytest.approx(0.3)

    def test_empty_set(self):
        with pytest.raises(SamplerStateError, match="surprise undefined on empty set"):
            surprise([1.0], SampleSet(3))


class TestPackThreshold:
    def test_pair(self):
        assert pack_threshold(make_set([[0.0, 0.0], [0.5, 0.0]])) == 0.5

    def test_collinear_triple(self):
        feats = [[0.0], [0.2], [0.4]]
        assert pack_threshold(make_set(feats)) == pytest.approx(0.2, rel=1e-12)
        assert pack_threshold(make_set(feats)) == pytest.approx(oracle_gamma(feats, "euclidean"), rel=1e-15)

    def test_identical_entries(self):
        assert pack_threshold(make_set([[0.25, 0.75]] * 4)) == 0.0

    @pytest.mark.parametrize("n", [0, 1])
    def test_undefined_below_two(self, n):
        with pytest.raises(SamplerStateError, match="γ undefined"):
            pack_threshold(make_set([[1.0, 0.0]] * n, capacity=3))

    @pytest.mark.parametrize("metric", METRICS)
    def test_random_sets_match_oracle(self, metric, rng):
        for _ in range(50):
            feats = [sampler_transform(v) for v in rng.normal(size=(int(rng.integers(2, 11)), 8))]
            got = pack_threshold(make_set(feats), metric)
            assert got == pytest.approx(oracle_gamma([list(f) for f in feats], metric), rel=1e-12, abs=1e-15)


class TestObserve:
    def test_duplicate_candidate_rejected_state_unchanged(self):
        state = make_set([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        before = state.frame_indices
        d = observe(frame(10, [0.5, 0.5]), [0.5, 0.5], state, SamplerConfig(capacity=3))
        assert d.action == REJECTED_SURPRISE
        assert d.alpha == 0.0 and d.gamma > 0.0
        assert state.frame_indices == before

    @pytest.mark.parametrize("metric", METRICS)
    def test_ten_entry_decisions_match_oracle(self, metric, rng):
        cfg = SamplerConfig(capacity=10, distance_metric=metric)
        for trial in range(40):
            feats = [sampler_transform(v) for v in rng.normal(size=(10, 6))]
            state = make_set(feats)
            cand = sampler_transform(rng.normal(size=6))
            members = [list(f) for f in feats]
            alpha = oracle_surprise(list(cand), members, metric)
            gamma = oracle_gamma(members, metric)
            d = observe(frame(100, cand), cand, state, cfg)
            assert d.alpha == pytest.approx(alpha, rel=1e-12, abs=1e-15)
            assert d.gamma == pytest.approx(gamma, rel=1e-12, abs=1e-15)
            assert d.action == (ACCEPTED if alpha > gamma else REJECTED_SURPRISE)
            if d.action == ACCEPTED:
                expected = list(range(10)) + [100]
                del expected[oracle_trim(members + [list(cand)], metric)]
                assert state.frame_indices == expected

    def test_seed_fill_then_test(self):
        cfg = SamplerConfig(capacity=2)
        state = SampleSet(2)
        acts = [observe(frame(i, v), v, state, cfg).action for i, v in enumerate([[1, 0], [0, 1], [0.5, 0.5]])]
        assert acts[:2] == [SEED_FILL, SEED_FILL]
        assert acts[2] in (ACCEPTED, REJECTED_SURPRISE)

    def test_seed_fill_has_no_alpha_gamma(self):
        state = SampleSet(2)
        d = observe(frame(0, [1.0, 0.0]), [1.0, 0.0], state, SamplerConfig(capacity=2))
        assert d.alpha is None and d.gamma is None

    def test_out_of_order_frame_index(self):
        state = SampleSet(2)
        cfg = SamplerConfig(capacity=2)
        observe(frame(5, [1.0, 0.0]), [1.0, 0.0], state, cfg)
        with pytest.raises(SamplerStateError):
            observe(frame(5, [0.0, 1.0]), [0.0, 1.0], state, cfg)

    def test_capacity_one_keeps_newest_distinct_frame(self):
        cfg = SamplerConfig(capacity=1)
        state = SampleSet(1)
        observe(frame(0, [1.0, 0.0]), [1.0, 0.0], state, cfg)
        d = observe(frame(1, [0.0, 1.0]), [0.0, 1.0], state, cfg)
        assert d.action == ACCEPTED and d.gamma == 0.0
        assert d.trimmed_frame_indices == (0,)
        assert state.frame_indices == [1]
        assert observe(frame(2, [0.0, 1.0]), [0.0, 1.0], state, cfg).action == REJECTED_SURPRISE


class TestTrim:
    def test_identical_pair_older_removed(self):
        feats = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 0.4], [0.0, 0.0, 1.0], [0.3, 0.3, 0.4]]
        state = make_set(feats, capacity=4)
        assert trim_sample_set(state) == 2
        assert state.frame_indices == [0, 1, 3, 4]

    @pytest.mark.parametrize("metric", METRICS)
    def test_random_matches_exhaustive_search(self, metric, rng):
        for _ in range(100):
            k = int(rng.integers(1, 8))
            feats = [sampler_transform(v) for v in rng.normal(size=(k + 1, 5))]
            state = make_set(feats, capacity=k)
            want = oracle_trim([list(f) for f in feats], metric)
            assert trim_sample_set(state, metric) == want

    def test_three_extra_entries(self, rng):
        feats = [sampler_transform(v) for v in rng.normal(size=(9, 4))]
        state = make_set(feats, capacity=6)
        removed = [trim_sample_set(state) for _ in range(3)]
        assert len(set(removed)) == 3 and len(state) == 6
        with pytest.raises(SamplerStateError):
            trim_sample_set(state)


class TestSummary:
    def test_empty(self):
        assert summary(SampleSet(3)) == []

    def test_seed_order(self):
        state = SampleSet(3)
        cfg = SamplerConfig(capacity=3)
        for i in (4, 7, 9):
            observe(frame(i, [i, 1.0]), sampler_transform([i, 1.0]), state, cfg)
        assert [e.frame_index for e in summary(state)] == [4, 7, 9]


def test_decision_dict_round_trip():
    d = SamplerDecision(3, ACCEPTED, 0.5, 0.25, (1, 2), gate=71.0, gate_enhanced=None, note=None)
    assert SamplerDecision.from_dict(d.to_dict()) == d
    with pytest.raises(ValueError):
        SamplerDecision.from_dict({"frame_index": 1, "action": "bogus"})


streams = st.tuples(
    st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(2, 40), st.sampled_from(METRICS)
)


def _run(seed, k, n, metric):
    rng = np.random.default_rng(seed)
    cfg = SamplerConfig(capacity=k, distance_metric=metric)
    state = SampleSet(k)
    # repeated rows make duplicate candidates likely
    base = rng.normal(size=(max(2, n // 3), 5))
    vecs = base[rng.integers(0, len(base), size=n)] + (rng.random(n) < 0.5)[:, None] * rng.normal(size=(n, 5))
    out = []
    for i, v in enumerate(vecs):
        feat = sampler_transform(v)
        before_gamma = pack_threshold(state, metric) if len(state) >= 2 else None
        before_len = len(state)
        dup = any(np.array_equal(feat, e.sampler_feature) for e in state.entries)
        d = observe(frame(i, v), feat, state, cfg)
        out.append((d, before_gamma, before_len, dup, len(state), state.frame_indices, vecs))
    return out


@settings(max_examples=60, deadline=None)
@given(streams)
def test_invariants(params):
    seed, k, n, metric = params
    steps = _run(seed, k, n, metric)
    offered = set()
    for d, before_gamma, before_len, dup, after_len, indices, _ in steps:
        offered.add(d.frame_index)
        assert after_len <= k
        assert indices == sorted(indices) and set(indices) <= offered
        assert (d.alpha is None) == (d.gamma is None) == (d.action == SEED_FILL)
        if dup and before_len >= 2 and d.action != SEED_FILL:
            assert d.action == REJECTED_SURPRISE
        if d.action == ACCEPTED and before_len == k and k >= 2 and before_gamma is not None:
            after = pack_threshold_of(indices, steps, metric)
            assert after >= before_gamma - 1e-12


def pack_threshold_of(indices, steps, metric):
    vecs = steps[0][-1]
    return oracle_gamma([list(sampler_transform(vecs[i])) for i in indices], metric)


@settings(max_examples=20, deadline=None)
@given(streams)
def test_determinism(params):
    a = [s[0] for s in _run(*params)]
    b = [s[0] for s in _run(*params)]
    assert a == b


@settings(max_examples=40, deadline=None)
@given(streams)
def test_final_set_matches_offline_oracle(params):
    seed, k, n, metric = params
    rng = np.random.default_rng(seed)
    frames = make_frames(rng.normal(size=(n, 5)))
    cfg = SamplerConfig(capacity=k, distance_metric=metric)
    state = SampleSet(k)
    for f in frames:
        observe(f, sampler_transform(f.embedding), state, cfg)
    # tau_ss = 0 lets every frame through the oracle's gate (softmax weights are positive)
    ref = oracle_run(frames, [[1.0] * 5, [-1.0] * 5], cfg.replace(tau_ss=0.0))
    assert state.frame_indices == ref.frame_indices
