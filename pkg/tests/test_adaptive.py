import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracle as oracle
from querycommittee import build_finite_profile, certifies, check_ejr, check_oas
from querycommittee._util import ValidationError
from querycommittee.adaptive import (
    EngineConfig,
    LogSampler,
    _initial,
    UcbState,
    run_alpha_pav,
    run_noisy_alpha_pav,
    run_ucb_alpha_pav,
    swap_ratio,
    theorem_ell,
    ucb_constants,
    ucb_log_term,
)
from querycommittee.queries import PermutationSampler, QueryLog, cover_size


def good_bad(m=30, k=3):
    """``k`` candidates approved by everyone, the rest by nobody."""
    return build_finite_profile([set(range(k))], m)


@st.composite
def instances(draw):
    m = draw(st.integers(3, 8))
    ballots = draw(st.lists(st.sets(st.integers(0, m - 1)), min_size=1, max_size=10))
    k = draw(st.integers(1, m - 1))
    t = draw(st.integers(k + 1, m))
    alpha = draw(st.sampled_from([Fraction(1), Fraction(3, 4), Fraction(1, 2)]))
    return build_finite_profile(ballots, m), k, t, alpha


class TestConfig:
    def test_t_must_exceed_k(self):
        with pytest.raises(ValidationError):
            EngineConfig(k=3, t=3)

    def test_alpha_range(self):
        with pytest.raises(ValidationError):
            EngineConfig(k=2, t=3, alpha=2)
        with pytest.raises(ValidationError):
            EngineConfig(k=2, t=3, alpha=0)

    def test_delta_range(self):
        with pytest.raises(ValidationError):
            EngineConfig(k=2, t=3, delta=1.0)


class TestConstants:
    def test_theorem_ell(self):
        assert theorem_ell(1, 5, 100, 0.05) == math.ceil(180000 * math.log(1e7)) == 2901258

    def test_ratio(self):
        assert swap_ratio(Fraction(1, 2), 1) == Fraction(1, 3)
        assert swap_ratio(1, 4) == 16

    def test_ell_near_one(self):
        assert theorem_ell(1, 1, 1, 0.999) >= 1

    def test_ucb_constants(self):
        ell, big_l = ucb_constants(1, 2, 10, 4, 0.1)
        expect = math.ceil(576 * 16 * (math.log(4608) + 8 * math.log(2) + 4 * math.log(10) - math.log(0.1)))
        assert ell == expect == 234950
        assert big_l == math.ceil(2 * 1.5 * 4 * 4 * ell) == 11277600

    def test_log_term_identity(self):
        assert ucb_log_term(3, 12, 0.05) == pytest.approx(math.log(4608 * 3**8 * 12**5 / 0.05))

    def test_L_linear_in_ell(self):
        ell, big_l = ucb_constants(1, 3, 20, 6, 0.1)
        assert big_l == math.ceil(2 * float(oracle.harmonic(3)) * cover_size(20, 3, 6) * 9 * ell)


class TestAlphaPav:
    def test_fig1a(self, fig1a):
        res = run_alpha_pav(fig1a, EngineConfig(k=2, t=3))
        assert 0 in res.committee and res.terminated
        assert res.final_gamma in (0.0, 0.25)

    def test_immediate_termination_swaps_once(self):
        p = build_finite_profile([{0, 1, 2, 3}] * 3, 4)
        res = run_alpha_pav(p, EngineConfig(k=2, t=3, seed=1))
        assert res.swaps == 1 and res.queries_issued == cover_size(4, 2, 3)

    def test_skip_initial_swap(self):
        p = build_finite_profile([{0, 1, 2, 3}] * 3, 4)
        res = run_alpha_pav(p, EngineConfig(k=2, t=3, initial=(0, 1), skip_initial_swap=True))
        assert res.swaps == 0 and res.committee == (0, 1)

    def test_round_query_count(self):
        p = build_finite_profile([set(range(10))], 10)
        res = run_alpha_pav(p, EngineConfig(k=3, t=5, skip_initial_swap=True))
        assert res.queries_issued == 4

    @given(instances())
    @settings(max_examples=80, deadline=None)
    def test_certified_and_within_budget(self, inst):
        p, k, t, a = inst
        res = run_alpha_pav(p, EngineConfig(k=k, t=t, alpha=a, seed=2))
        assert certifies(p, res.committee, a)
        assert check_ejr(p, res.committee, a).satisfied and check_oas(p, res.committee, a).satisfied
        cov = cover_size(p.m, k, t)
        assert res.queries_issued <= cov * float(swap_ratio(a, k) * oracle.harmonic(k)) + cov

    @given(instances())
    @settings(max_examples=60, deadline=None)
    def test_each_guarded_swap_gains(self, inst):
        p, k, t, a = inst
        res = run_alpha_pav(p, EngineConfig(k=k, t=t, alpha=a, seed=4))
        ballots = [set(b) for b in p.ballots]
        w = set(_initial(res.config, p.m))
        for _, out, inn, gamma in res.swap_trace:
            nxt = (w - {out}) | {inn}
            if gamma is not None:
                assert oracle.pav(ballots, nxt) - oracle.pav(ballots, w) >= 1 / swap_ratio(a, k)
            w = nxt
        assert tuple(sorted(w)) == res.committee

    def test_reference_mode_is_local_optimum(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            ballots = oracle.random_ballots(rng, 12, 7)
            p = build_finite_profile(ballots, 7)
            res = run_alpha_pav(p, EngineConfig(k=3, t=5), until_stable=True)
            assert oracle.dstar(ballots, res.committee, 7) < Fraction(1, 3)


class TestNoisy:
    def test_deterministic_population_matches_exact(self):
        p = build_finite_profile([{0, 5}, ] * 3, 8)
        cfg = EngineConfig(k=2, t=4, ell_override=1, seed=3)
        noisy, exact = run_noisy_alpha_pav(p, cfg), run_alpha_pav(p, cfg)
        assert noisy.committee == exact.committee
        assert [s[1:3] for s in noisy.swap_trace] == [s[1:3] for s in exact.swap_trace]

    def test_voters_per_round(self):
        p = build_finite_profile([{0, 1, 2}], 9)
        res = run_noisy_alpha_pav(p, EngineConfig(k=3, t=5, ell_override=7, initial=(0, 1, 2),
                                                  skip_initial_swap=True))
        assert res.voters_queried == cover_size(9, 3, 5) * 7 == len(res.query_log)

    def test_budget_flag(self, fig1a):
        res = run_noisy_alpha_pav(fig1a, EngineConfig(k=1, t=2, ell_override=50, voter_budget=30))
        assert res.budget_exhausted and res.voters_queried == 0

    def test_fig1a_small_run(self, fig1a):
        pop = fig1a.as_population()
        hits = sum(0 in run_noisy_alpha_pav(pop, EngineConfig(k=2, t=3, ell_override=200, seed=s)).committee
                   for s in range(10))
        assert hits >= 9


class TestUcbState:
    def test_empty_bounds(self):
        st_ = UcbState(5, 2, 1.0)
        st_.set_committee([0, 1])
        assert np.all(np.isinf(st_.upper_all()[2:]))
        assert np.all(st_.lower_all()[2:] == -np.inf)

    def test_theta_radius(self):
        st_ = UcbState(4, 1, 0.05)
        st_.set_committee([0])
        for _ in range(20):
            st_.append((0, 2), ())
        assert st_.upper(2) == pytest.approx(0.05)

    def test_full_coverage_swap_estimate(self):
        st_ = UcbState(4, 1, 0.0)
        st_.set_committee([0])
        st_.append((0, 3), {3})
        assert st_.lower(3)[0] == 1

    def test_partial_coverage_denominator(self):
        st_ = UcbState(6, 3, 0.0)
        st_.set_committee([0, 1, 2])
        st_.append((0, 5), {5})
        assert st_.lower(5)[0] == pytest.approx(1 / 3)

    def test_stratum_k_is_sample_mean(self):
        st_ = UcbState(4, 2, 0.0)
        st_.set_committee([0, 1])
        for r in ({2}, {0, 2}, {0, 1, 2}, set()):
            st_.append((0, 1, 2), r)
        # (1 + 1/2 + 1/3 + 0) / 4
        assert st_.tot[2, 2] / (st_.cnt[2, 2] * st_.scale) == pytest.approx(11 / 24)

    @given(st.lists(st.tuples(st.sets(st.integers(0, 6), min_size=1, max_size=4),
                              st.sets(st.integers(0, 6))), max_size=30),
           st.lists(st.integers(0, 6), min_size=3, max_size=3, unique=True))
    @settings(max_examples=60, deadline=None)
    def test_nesting_and_rebuild(self, entries, w):
        st_ = UcbState(7, 3, 0.5)
        st_.set_committee(w)
        for q, r in entries:
            st_.append(sorted(q), sorted(r & q))
        incremental = st_.snapshot()
        st_.rebuild()
        for a, b in zip(incremental, st_.snapshot()):
            assert np.array_equal(a, b)
        assert np.all(np.diff(st_.cnt, axis=0) <= 0)
        assert np.all(np.diff(st_.pcnt[1:], axis=0) <= 0)


class TestUcb:
    def test_good_bad_terminates_with_good(self):
        p = good_bad()
        res = run_ucb_alpha_pav(p, EngineConfig(k=3, t=5, ell_override=6, theta_override=0.05, seed=1))
        assert res.terminated and res.committee == (0, 1, 2)

    def test_deterministic_given_seed(self):
        p = good_bad(12, 2)
        cfg = EngineConfig(k=2, t=4, ell_override=6, theta_override=0.05, seed=5)
        a, b = run_ucb_alpha_pav(p, cfg), run_ucb_alpha_pav(p, cfg)
        assert a.to_json() == b.to_json()

    def test_replay_reproduces_decisions(self):
        rng = np.random.default_rng(4)
        p = build_finite_profile(oracle.random_ballots(rng, 40, 8, 0.3), 8)
        cfg = EngineConfig(k=2, t=4, ell_override=5, theta_override=0.05, seed=2, voter_budget=300)
        first = run_ucb_alpha_pav(p, cfg)
        again = run_ucb_alpha_pav(p, cfg, sampler=LogSampler(first.query_log))
        assert again.committee == first.committee and again.swap_trace == first.swap_trace
        assert again.voters_queried == first.voters_queried

    def test_exact_replay_mode_agrees(self):
        rng = np.random.default_rng(6)
        p = build_finite_profile(oracle.random_ballots(rng, 30, 7, 0.3), 7)
        base = dict(k=2, t=4, ell_override=5, theta_override=0.05, seed=3, voter_budget=200)
        a = run_ucb_alpha_pav(p, EngineConfig(**base))
        b = run_ucb_alpha_pav(p, EngineConfig(**base, exact_replay=True))
        assert a.committee == b.committee and a.swap_trace == b.swap_trace

    def test_state_recomputable_from_log(self):
        rng = np.random.default_rng(1)
        p = build_finite_profile(oracle.random_ballots(rng, 30, 7, 0.3), 7)
        seen = []
        cfg = EngineConfig(k=2, t=4, ell_override=5, theta_override=0.05, seed=3, voter_budget=60,
                           run_to_budget=True)
        res = run_ucb_alpha_pav(
            p, cfg, on_step=lambda s: seen.append((s.committee, s.state.size, s.state.snapshot())))
        assert len(seen) > 10
        for w, size, snap in seen[::7]:
            prefix = QueryLog()
            for e in list(res.query_log)[:size]:
                prefix.append(e.query, e.response)
            fresh = UcbState.from_log(prefix, p.m, w, 0.05)
            for a, b in zip(snap, fresh.snapshot()):
                assert np.array_equal(a, b)

    def test_harness_mode_spends_budget(self):
        p = build_finite_profile([{0, 1}, {2, 3}] * 10, 6)
        res = run_ucb_alpha_pav(p, EngineConfig(k=2, t=4, ell_override=6, theta_override=0.05,
                                                run_to_budget=True),
                                sampler=PermutationSampler(p, 0))
        assert res.voters_queried == 20 and res.budget_exhausted

    def test_result_json(self, fig1a):
        res = run_ucb_alpha_pav(fig1a, EngineConfig(k=1, t=2, ell_override=3, theta_override=0.05,
                                                    voter_budget=40))
        d = res.to_dict()
        assert d["constants"]["ell"] == 3 and d["config"]["k"] == 1
