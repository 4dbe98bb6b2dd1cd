import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracle as oracle
from querycommittee import build_finite_profile, gen_product_population
from querycommittee._util import ValidationError
from querycommittee.queries import (
    BallotResponse,
    IidSampler,
    PermutationSampler,
    QueryLog,
    ballot_delta_add,
    ballot_delta_swap,
    cover_size,
    exact_query,
    noisy_query,
    plan_cover,
)


class TestExactQuery:
    def test_fig1a(self, fig1a):
        r = exact_query(fig1a, [0, 1])
        assert r.masses == {frozenset({0}): Fraction(1, 2), frozenset({1}): Fraction(1, 2)}
        assert r.mass({0, 1}) == 0

    def test_product(self):
        r = exact_query(gen_product_population(7, 2, 5), [2])
        assert r.mass({2}) == Fraction(2, 5)

    def test_empty_query(self, fig1a):
        with pytest.raises(ValidationError):
            exact_query(fig1a, [])

    def test_oversized(self, fig1a):
        with pytest.raises(ValidationError):
            exact_query(fig1a, [0, 1, 2], t=2)

    @given(st.lists(st.sets(st.integers(0, 5)), min_size=1, max_size=10),
           st.sets(st.integers(0, 5), min_size=1))
    @settings(max_examples=80, deadline=None)
    def test_sums_to_one(self, ballots, q):
        r = exact_query(build_finite_profile(ballots, 6), q)
        assert sum(r.masses.values()) == 1


class TestNoisyQuery:
    def test_frequency(self, fig1a):
        rng = np.random.default_rng(2024)
        hits = sum(noisy_query(fig1a, [0, 1], rng).approved == {0} for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) < 0.02

    def test_deterministic_population(self):
        p = build_finite_profile([{1, 3}] * 4, 5)
        rng = np.random.default_rng(0)
        assert {noisy_query(p, [0, 1, 2], rng).approved for _ in range(20)} == {frozenset({1})}

    def test_matches_exact_in_the_limit(self):
        rng = np.random.default_rng(9)
        ballots = oracle.random_ballots(rng, 7, 5)
        p = build_finite_profile(ballots, 5)
        q = [0, 2, 4]
        exact = exact_query(p, q).masses
        draws = 10_000
        counts: dict = {}
        for _ in range(draws):
            s = noisy_query(p, q, rng).approved
            counts[s] = counts.get(s, 0) + 1
        # Hoeffding radius at confidence 1 - 1e-6
        radius = math.sqrt(math.log(2e6) / (2 * draws))
        for s in set(exact) | set(counts):
            assert abs(counts.get(s, 0) / draws - float(exact.get(s, 0))) < radius

    def test_response_inside_query(self):
        with pytest.raises(ValidationError):
            BallotResponse((0, 1), frozenset({2}))


class TestPlanCover:
    def test_count(self):
        plan = plan_cover(10, [0, 4, 7], 5)
        assert len(plan) == 4 == cover_size(10, 3, 5)
        assert all({0, 4, 7} <= set(q) and len(q) == 5 for q in plan)
        assert set().union(*plan) == set(range(10))

    def test_m_equals_t(self):
        assert plan_cover(5, [1, 2], 5) == [(0, 1, 2, 3, 4)]

    def test_t_equals_k(self):
        with pytest.raises(ValidationError):
            plan_cover(6, [0, 1], 2)

    @given(st.integers(2, 14), st.data())
    @settings(max_examples=100, deadline=None)
    def test_properties(self, m, data):
        k = data.draw(st.integers(1, m - 1))
        t = data.draw(st.integers(k + 1, m))
        w = data.draw(st.lists(st.integers(0, m - 1), min_size=k, max_size=k, unique=True))
        plan = plan_cover(m, w, t)
        assert len(plan) == math.ceil((m - k) / (t - k))
        assert all(set(w) <= set(q) and len(q) <= t for q in plan)
        assert set().union(*plan) == set(range(m))


class TestBallotEstimators:
    def test_add(self):
        r = BallotResponse((0, 1), frozenset({1}))
        assert ballot_delta_add(r, [0], 1) == 1
        assert ballot_delta_add(BallotResponse((0, 1), frozenset()), [0], 1) == 0

    def test_swap(self):
        r = BallotResponse((0, 1), frozenset({1}))
        assert ballot_delta_swap(r, [0], 1, 0) == 1
        assert ballot_delta_swap(BallotResponse((0, 1), frozenset({0, 1})), [0], 1, 0) == 0

    def test_coverage_violation(self):
        r = BallotResponse((0, 1), frozenset({1}))
        with pytest.raises(ValidationError):
            ballot_delta_add(r, [0], 2)
        with pytest.raises(ValidationError):
            ballot_delta_swap(r, [0, 2], 1, 0)

    @given(st.lists(st.sets(st.integers(0, 5)), min_size=1, max_size=9), st.data())
    @settings(max_examples=100, deadline=None)
    def test_voter_average_identities(self, ballots, data):
        m = 6
        k = data.draw(st.integers(1, 4))
        w = sorted(data.draw(st.lists(st.integers(0, m - 1), min_size=k, max_size=k, unique=True)))
        x = data.draw(st.sampled_from([c for c in range(m) if c not in w]))
        q = tuple(sorted(set(w) | {x}))
        resp = [BallotResponse(q, frozenset(b & set(q))) for b in ballots]
        n = len(ballots)
        assert sum(ballot_delta_add(r, w, x) for r in resp) / n == oracle.add_gain(ballots, w, x)
        for y in w:
            got = sum(ballot_delta_swap(r, w, x, y) for r in resp) / n
            assert got == oracle.swap_gain(ballots, w, x, y)


class TestQueryLog:
    def test_roundtrip(self, tmp_path):
        log = QueryLog()
        log.append((0, 1, 2), {1})
        log.append((0, 3, 4), set())
        path = tmp_path / "log.jsonl"
        log.write(path)
        back = QueryLog.read(path)
        assert [(e.i, e.query, e.response) for e in back] == [(e.i, e.query, e.response) for e in log]

    def test_contiguity(self):
        with pytest.raises(ValidationError):
            QueryLog.from_jsonl('{"i": 1, "query": [0], "response": []}\n')

    def test_response_outside(self):
        with pytest.raises(ValidationError):
            QueryLog.from_jsonl('{"i": 0, "query": [0], "response": [1]}\n')


class TestSamplers:
    def test_iid_streams_per_index(self, fig1a):
        a, b = IidSampler(fig1a, 5), IidSampler(fig1a, 5)
        assert a.draw(3, (0, 1), 10) == b.draw(3, (0, 1), 10)
        # issuing queries in a different order gives the same answers
        first = [a.draw(i, (0, 1, 2), 4) for i in range(5)]
        second = [b.draw(i, (0, 1, 2), 4) for i in reversed(range(5))][::-1]
        assert first == second

    def test_permutation_each_voter_once(self):
        p = build_finite_profile([{i} for i in range(6)], 6)
        s = PermutationSampler(p, 1)
        got = s.draw(0, range(6), 4) + s.draw(1, range(6), 4)
        assert len(got) == 6 and s.remaining == 0
        assert sorted(min(r.approved) for r in got) == list(range(6))
