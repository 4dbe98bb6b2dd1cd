from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracle as oracle
from querycommittee import build_finite_profile, certifies, exhaustive_pav
from querycommittee._util import ValidationError
from querycommittee.fairness import (
    avs,
    avs_lower_bound,
    batch_audit,
    batch_audit_alphas,
    check_ejr,
    check_jr,
    check_jr_measure,
    check_oas,
    closures,
    validate_witness,
)

ALPHAS = [Fraction(1), Fraction(3, 4), Fraction(1, 2)]


@st.composite
def instances(draw, max_n=6, max_m=5, max_k=3):
    m = draw(st.integers(2, max_m))
    ballots = draw(st.lists(st.sets(st.integers(0, m - 1)), min_size=1, max_size=max_n))
    k = draw(st.integers(1, min(max_k, m - 1)))
    w = draw(st.lists(st.integers(0, m - 1), min_size=k, max_size=k, unique=True))
    return ballots, m, sorted(w)


class TestJR:
    def test_fig1a_violated(self, fig1a):
        r = check_jr(fig1a, [1, 2])
        assert not r.satisfied
        assert r.witness.candidates == (0,) and r.witness.voters == (0,)
        assert validate_witness(fig1a, [1, 2], r)

    def test_fig1a_satisfied(self, fig1a):
        assert check_jr(fig1a, [0, 1]).satisfied

    def test_no_approvals(self):
        assert check_jr(build_finite_profile([set(), set()], 3), [0, 1]).satisfied

    @given(instances())
    @settings(max_examples=150, deadline=None)
    def test_agrees_with_level_one_ejr(self, inst):
        ballots, m, w = inst
        p = build_finite_profile(ballots, m)
        jr = check_jr(p, w)
        assert jr.satisfied == (not oracle.jr_violated(ballots, w, len(w)))
        ejr = check_ejr(p, w)
        if ejr.satisfied:
            assert jr.satisfied
        if not jr.satisfied:
            assert not ejr.satisfied

    def test_measure_version(self, fig1a):
        pop = fig1a.as_population()
        assert not check_jr_measure(pop, [1, 2]).satisfied
        assert check_jr_measure(pop, [0, 1]).satisfied


class TestEJR:
    def test_violated(self):
        p = build_finite_profile([{0}, {0}, {1}, {1}], 3)
        r = check_ejr(p, [0, 2])
        assert not r.satisfied
        assert r.witness.candidates == (1,) and r.witness.level == 1
        assert set(r.witness.voters) == {2, 3}
        assert validate_witness(p, [0, 2], r)

    def test_satisfied(self):
        p = build_finite_profile([{0}, {0}, {1}, {1}], 3)
        assert check_ejr(p, [0, 1]).satisfied

    @given(instances(max_n=7, max_m=5))
    @settings(max_examples=60, deadline=None)
    def test_pav_satisfies_ejr(self, inst):
        ballots, m, w = inst
        p = build_finite_profile(ballots, m)
        best = exhaustive_pav(p, len(w))
        assert check_ejr(p, best).satisfied and check_oas(p, best).satisfied

    @given(instances(), st.sampled_from(ALPHAS))
    @settings(max_examples=200, deadline=None)
    def test_matches_group_oracle(self, inst, alpha):
        ballots, m, w = inst
        p = build_finite_profile(ballots, m)
        expect = not oracle.ejr_violated(ballots, w, len(w), alpha)
        for method in ("closure", "raw"):
            r = check_ejr(p, w, alpha, method=method)
            assert r.satisfied == expect
            if not r.satisfied:
                assert validate_witness(p, w, r)

    @given(instances(), st.sampled_from(ALPHAS[1:]))
    @settings(max_examples=100, deadline=None)
    def test_witness_transfers_upward(self, inst, alpha):
        ballots, m, w = inst
        p = build_finite_profile(ballots, m)
        r = check_ejr(p, w, alpha)
        if r.satisfied:
            return
        k, n, size = len(w), p.n, len(r.witness.voters)
        # the alpha = 1 threshold is the largest, so a witness large enough for it transfers
        if size * k >= r.witness.level * n:
            assert not check_ejr(p, w, 1).satisfied

    def test_bad_alpha(self, fig1a):
        with pytest.raises(ValidationError):
            check_ejr(fig1a, [0, 1], alpha=Fraction(3, 2))


class TestOAS:
    def test_fig1a(self, fig1a):
        assert check_oas(fig1a, [1, 2]).satisfied
        assert check_oas(fig1a, [0, 1]).satisfied

    def test_everyone_approves_everything(self):
        p = build_finite_profile([{0, 1, 2}] * 4, 3)
        assert check_oas(p, [0, 1]).satisfied
        assert avs(p, [0, 1], range(4)) == 2

    @given(instances(), st.sampled_from(ALPHAS))
    @settings(max_examples=200, deadline=None)
    def test_matches_group_oracle(self, inst, alpha):
        ballots, m, w = inst
        p = build_finite_profile(ballots, m)
        expect = not oracle.oas_violated(ballots, w, len(w), alpha)
        for method in ("closure", "raw"):
            r = check_oas(p, w, alpha, method=method)
            assert r.satisfied == expect
            if not r.satisfied:
                assert validate_witness(p, w, r)

    def test_report_json(self):
        p = build_finite_profile([{0}, {1, 2}], 3)
        d = check_jr(p, [1, 2]).to_dict()
        assert d["verdict"] == "violated" and d["witness"]["candidates"] == [0]


class TestAvs:
    def test_values(self, fig1a):
        assert avs(fig1a, [0, 1], [0, 1]) == 1
        assert avs(fig1a, [0, 1], [1]) == 1
        p = build_finite_profile([{2}, {0, 1}], 3)
        assert avs(p, [0, 1], [0]) == 0
        assert avs(p, [0, 1], [1]) == 2

    def test_empty_group(self, fig1a):
        with pytest.raises(ValidationError):
            avs(fig1a, [0, 1], [])

    def test_lower_bound_example(self, fig1a):
        assert avs_lower_bound(fig1a, [0, 1], [1]) == 1

    def test_lower_bound_empty_intersection(self, fig1a):
        assert avs_lower_bound(fig1a, [0, 1], [0, 1]) <= 0

    def test_lower_bound_zero_delta(self):
        p = build_finite_profile([{0, 1}, {0, 1}], 3)
        assert avs_lower_bound(p, [0, 1], [0, 1]) == 2

    @given(instances(max_n=8), st.data())
    @settings(max_examples=150, deadline=None)
    def test_lower_bound_holds(self, inst, data):
        ballots, m, w = inst
        p = build_finite_profile(ballots, m)
        group = data.draw(st.sets(st.integers(0, p.n - 1), min_size=1))
        assert avs(p, w, group) >= avs_lower_bound(p, w, group)


def test_closures_are_ballot_intersections():
    p = build_finite_profile([{0, 1, 2}, {1, 2, 3}, {2, 3}], 4)
    got = set(closures(p))
    assert {(0, 1, 2), (1, 2, 3), (2, 3), (1, 2), (2,)} <= got
    assert all(any(set(t) <= b for b in p.ballots) for t in got)


@given(instances(), st.sampled_from(ALPHAS))
@settings(max_examples=150, deadline=None)
def test_certificate_soundness(inst, alpha):
    ballots, m, w = inst
    p = build_finite_profile(ballots, m)
    if certifies(p, w, alpha):
        assert check_ejr(p, w, alpha).satisfied
        assert check_oas(p, w, alpha).satisfied


def test_batch_audit_matches_scalar_checks():
    rng = np.random.default_rng(3)
    m, w = 4, (0, 1)
    counts = rng.integers(0, 2, size=(300, 2**m)) * rng.integers(0, 3, size=(300, 2**m))
    counts[counts.sum(axis=1) == 0, 1] = 1
    for alpha in ALPHAS:
        out = batch_audit(counts, m, w, alpha)
        for row, cert, ejr, oas in zip(counts, out["certified"], out["ejr"], out["oas"]):
            ballots = [{c for c in range(m) if b >> c & 1} for b in range(2**m) for _ in range(row[b])]
            p = build_finite_profile(ballots, m)
            assert cert == certifies(p, w, alpha)
            assert ejr == check_ejr(p, w, alpha).satisfied
            assert oas == check_oas(p, w, alpha).satisfied


def test_batch_audit_alphas_matches_single_alpha():
    rng = np.random.default_rng(8)
    m, w = 5, (1, 3, 4)
    counts = rng.integers(0, 3, size=(200, 2**m)) * (rng.random((200, 2**m)) < 0.15)
    counts[counts.sum(axis=1) == 0, 2] = 1
    joint = batch_audit_alphas(counts, m, w, ALPHAS)
    assert set(joint) == set(ALPHAS)
    for alpha in ALPHAS:
        single = batch_audit(counts, m, w, alpha)
        for key in ("certified", "ejr", "oas"):
            assert np.array_equal(joint[alpha][key], single[key])


def test_batch_audit_rejects_bad_counts():
    with pytest.raises(ValidationError):
        batch_audit(np.zeros((2, 8), dtype=int), 4, (0,))
    with pytest.raises(ValidationError):
        batch_audit(-np.ones((1, 16), dtype=int), 4, (0,))
    with pytest.raises(ValidationError):
        batch_audit_alphas(np.ones((1, 16), dtype=int), 4, (0,), ())
