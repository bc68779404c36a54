from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hoplab.labeler import (
    ZERO,
    HopSample,
    LabelerConfig,
    build_hop_samples,
    hop_bin_of,
    hop_label,
    label_sequence,
    validate_balance,
)
from hoplab.schemas import HOP_SAMPLE_SCHEMA, validate_record

from conftest import make_seq

unit = st.floats(0.0, 1.0, allow_nan=False)


def exact_hop(p: Fraction, q: Fraction) -> Fraction:
    if q >= p:
        return Fraction(0) if p == 1 else (q - p) / (1 - p)
    return (q - p) / p


class TestHopLabel:
    def test_progress_branch(self):
        assert hop_label(0.4, 0.7) == pytest.approx(0.5, abs=1e-12)

    def test_regress_branch(self):
        assert hop_label(0.6, 0.3) == pytest.approx(-0.5, abs=1e-12)

    @pytest.mark.parametrize("x", [0.0, 0.25, 0.5, 1.0])
    def test_no_change(self, x):
        assert hop_label(x, x) == 0.0

    def test_full_task(self):
        assert hop_label(0.0, 1.0) == 1.0

    @pytest.mark.parametrize("p, q", [(-0.1, 0.5), (0.5, 1.1), (float("nan"), 0.2)])
    def test_rejects_out_of_range(self, p, q):
        with pytest.raises(ValueError):
            hop_label(p, q)

    @given(unit, unit)
    def test_range_and_sign(self, p, q):
        h = hop_label(p, q)
        assert -1.0 <= h <= 1.0
        if q > p:
            assert h > 0
        elif q < p:
            assert h < 0
        else:
            assert h == 0

    @given(unit)
    def test_anchor_identities(self, x):
        assert hop_label(0.0, x) == x
        assert hop_label(1.0, x) == x - 1.0

    @given(st.integers(1, 200).flatmap(lambda M: st.tuples(st.just(M), st.integers(0, M), st.integers(0, M))))
    def test_matches_rational_arithmetic(self, case):
        M, i, j = case
        exact = exact_hop(Fraction(i, M), Fraction(j, M))
        assert hop_label(i / M, j / M) == pytest.approx(float(exact), abs=1e-12)


@pytest.mark.parametrize("hop, n, expected", [(-1.0, 8, 0), (1.0, 8, 7), (0.0, 8, 4), (-0.01, 8, 3), (0.52, 20, 15)])
def test_hop_bin_of(hop, n, expected):
    assert hop_bin_of(hop, n) == expected


class TestLabelerConfig:
    def test_zero_count_formula(self):
        assert LabelerConfig(zero_hop_fraction=0.2).zero_hop_count(32) == 8
        assert LabelerConfig(zero_hop_fraction=0.0).zero_hop_count(32) == 0

    @pytest.mark.parametrize(
        "kwargs",
        [{"n_hop_bins": 0}, {"n_distance_bins": 0}, {"zero_hop_fraction": 1.0}, {"zero_hop_threshold": 1.0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LabelerConfig(**kwargs)


def _index(seq):
    return {s.frame_index: i for i, s in enumerate(seq.states)}


class TestBuildHopSamples:
    def test_balanced_40(self):
        seq = make_seq(100)
        cfg = LabelerConfig(8, 4, 0.2, 0.01, 7)
        res = label_sequence(seq, cfg)
        assert res.infeasible == []
        assert len(res.samples) == 40
        assert sum(s.is_zero for s in res.samples) == 8

    def test_minimal(self):
        samples = build_hop_samples(make_seq(2), LabelerConfig(1, 1, 0.0, 0.01, 0))
        assert len(samples) == 1
        assert not samples[0].is_zero

    def test_rejects_short_sequence(self):
        with pytest.raises(ValueError):
            build_hop_samples(make_seq(1), LabelerConfig())

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_hops_recompute_and_bins_agree(self, seed):
        seq = make_seq(150)
        cfg = LabelerConfig(10, 5, 0.25, 0.02, seed)
        idx = _index(seq)
        for s in build_hop_samples(seq, cfg):
            p, q = idx[s.state_before.frame_index], idx[s.state_after.frame_index]
            if s.is_zero:
                assert s.hop == 0.0 and s.distance_bin == ZERO
                assert abs(q - p) <= cfg.zero_hop_threshold * seq.M * (1 + 1e-12)
            else:
                assert s.hop == hop_label(p / seq.M, q / seq.M)
                assert s.hop_bin == hop_bin_of(s.hop, cfg.n_hop_bins)
                assert abs(q - p) > cfg.zero_hop_threshold * seq.M
            assert s.state_init == seq.init and s.state_goal == seq.goal

    def test_deterministic(self):
        seq = make_seq(80)
        cfg = LabelerConfig(6, 3, 0.2, 0.01, 11)
        a = [json.dumps(s.to_json()) for s in build_hop_samples(seq, cfg)]
        b = [json.dumps(s.to_json()) for s in build_hop_samples(seq, cfg)]
        assert a == b
        c = [json.dumps(s.to_json()) for s in build_hop_samples(seq, LabelerConfig(6, 3, 0.2, 0.01, 12))]
        assert a != c

    def test_infeasible_bins_reported_not_fabricated(self):
        # M=3 cannot populate 20 hop bins x 4 distance bins
        res = label_sequence(make_seq(3), LabelerConfig(20, 4, 0.0, 0.01, 0))
        non_zero = [s for s in res.samples if not s.is_zero]
        assert len(non_zero) + len(res.infeasible) == 80
        assert len({(s.hop_bin, s.distance_bin) for s in non_zero}) == len(non_zero)

    def test_zero_shortfall(self):
        # eps below 1/M leaves only the p == q pairs as zero-hop candidates
        res = label_sequence(make_seq(3), LabelerConfig(4, 2, 0.9, 0.01, 0))
        assert res.zero_shortfall > 0
        assert sum(s.is_zero for s in res.samples) == 4

    def test_json_schema(self):
        for s in build_hop_samples(make_seq(30), LabelerConfig()):
            obj = s.to_json()
            validate_record(obj, HOP_SAMPLE_SCHEMA)
            assert HopSample.from_json(json.loads(json.dumps(obj))) == s


class TestValidateBalance:
    def test_balanced_set(self):
        cfg = LabelerConfig(8, 4, 0.2, 0.01, 7)
        rep = validate_balance(build_hop_samples(make_seq(100), cfg), cfg)
        assert set(rep.counts.values()) == {1}
        assert len(rep.counts) == 32
        assert rep.zero_fraction == pytest.approx(0.2)
        assert rep.infeasible == [] and rep.balanced

    def test_empty(self):
        rep = validate_balance([], LabelerConfig())
        assert rep.counts == {} and rep.zero_fraction == 0 and rep.total == 0
        assert rep.balanced

    def test_double_filled_bin_flagged(self):
        # two trajectories give every cell 2 samples; doubling one cell to 4 must be flagged
        cfg = LabelerConfig(4, 2, 0.0, 0.01, 3)
        a = build_hop_samples(make_seq(60, tid="a"), cfg)
        b = build_hop_samples(make_seq(60, tid="b"), cfg)
        extra = [s for s in a if (s.hop_bin, s.distance_bin) == (1, 0)]
        rep = validate_balance(a + b + extra * 2, cfg)
        assert rep.imbalanced == [(1, 0)]
        assert rep.counts[(1, 0)] == 4
        assert not rep.balanced
