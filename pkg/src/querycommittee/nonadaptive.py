"""Non-adaptive selection from exact queries fixed in advance.

``run_nonadaptive_greedy`` queries every ``t``-subset and then picks
candidates greedily from the resulting masses; it guarantees JR whenever
``t >= 2k/3``.  ``run_full_info_pav`` queries enough sets to recover every
``k``-committee's PAV score and returns the exhaustive winner.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from querycommittee._util import BudgetExceeded, ValidationError
from querycommittee.queries import ExactResponse, exact_query
from querycommittee.scoring import ENUMERATION_BUDGET

DEFAULT_QUERY_CAP = math.comb(14, 4)


@dataclass(frozen=True)
class NonadaptivePlan:
    queries: tuple[tuple[int, ...], ...]

    def __len__(self):
        return len(self.queries)


def greedy_plan(m: int, t: int, cap: int = DEFAULT_QUERY_CAP) -> NonadaptivePlan:
    """Every ``t``-subset of ``C`` in lexicographic order."""
    if not 1 <= t <= m:
        raise ValidationError(f"t={t} must lie in [1, m={m}]")
    if math.comb(m, t) > cap:
        raise BudgetExceeded(f"C({m},{t}) = {math.comb(m, t)} queries exceeds cap {cap}")
    return NonadaptivePlan(tuple(itertools.combinations(range(m), t)))


def full_info_plan(m: int, k: int, t: int, cap: int = ENUMERATION_BUDGET) -> NonadaptivePlan:
    """Queries of size ``t`` whose union of ``k``-subsets is every ``k``-committee.

    Each ``k``-subset not yet inside an earlier query is padded with the
    lowest-index other candidates up to size ``t``.
    """
    if not 1 <= k <= t:
        raise ValidationError(f"need 1 <= k={k} <= t={t}")
    t = min(t, m)
    if math.comb(m, k) > cap:
        raise BudgetExceeded(f"C({m},{k}) committees exceeds cap {cap}")
    covered: set[tuple[int, ...]] = set()
    plan = []
    for w in itertools.combinations(range(m), k):
        if w in covered:
            continue
        pad = [c for c in range(m) if c not in w][:t - k]
        q = tuple(sorted(w + tuple(pad)))
        plan.append(q)
        covered.update(itertools.combinations(q, k))
    return NonadaptivePlan(tuple(plan))


class _Masses:
    """Answers "mass approving ``c`` and none of ``S``" from the issued responses."""

    def __init__(self, responses: dict[tuple[int, ...], ExactResponse], m: int, t: int):
        self.responses = responses
        self.m, self.t = m, t

    def canonical(self, need: set[int]) -> tuple[int, ...]:
        pad = [c for c in range(self.m) if c not in need][:self.t - len(need)]
        return tuple(sorted(need | set(pad)))

    def exclusive(self, c: int, avoid) -> Fraction:
        avoid = set(avoid)
        if c in avoid:
            return Fraction(0)
        need = avoid | {c}
        if len(need) > self.t:
            raise ValidationError(f"{sorted(need)} does not fit in a query of size {self.t}")
        resp = self.responses[self.canonical(need)]
        return sum((Fraction(p) for s, p in resp.masses.items() if c in s and not (s & avoid)),
                   Fraction(0))


def run_nonadaptive_greedy(pop, k: int, t: int, cap: int = DEFAULT_QUERY_CAP) -> tuple[int, ...]:
    """Greedy JR committee from all ``t``-subset queries (requires ``t >= 2k/3``).

    Rounds ``1..t`` pick the approval winner among voters approving none of
    the earlier picks.  Rounds ``t+1..floor(3t/2)`` pick the lowest-index
    unpicked ``c`` such that both

    * voters approving ``c`` and none of ``c_1..c_{t-1}``, and
    * voters approving ``c`` and none of ``c_1..c_{i-1}`` outside the window
      ``c_{floor(t/2)}..c_{t-1}``

    have mass at least ``1/k``, falling back to the lowest-index unpicked
    candidate.  The first ``k`` picks are returned.
    """
    m = pop.m
    if not 1 <= k <= m:
        raise ValidationError(f"k={k} must lie in [1, m={m}]")
    if 3 * t < 2 * k:
        raise ValidationError(f"t={t} is below 2k/3 for k={k}")
    t = min(t, m)
    plan = greedy_plan(m, t, cap)
    responses = {q: exact_query(pop, q, t) for q in plan.queries}
    masses = _Masses(responses, m, t)
    sel: list[int] = []

    def default() -> int:
        return min(c for c in range(m) if c not in sel)

    for _ in range(min(t, k)):
        scores = [(masses.exclusive(c, sel), c) for c in range(m) if c not in sel]
        best = max(scores, key=lambda sc: (sc[0], -sc[1]))
        sel.append(best[1])
    i = t
    while len(sel) < k and i < (3 * t) // 2:
        i += 1
        first = sel[:t - 1]
        window = set(sel[t // 2 - 1:t - 1])
        rest = [c for c in sel[:i - 1] if c not in window]
        pick = default()
        for c in range(m):
            if c in sel:
                continue
            if k * masses.exclusive(c, first) >= 1 and k * masses.exclusive(c, rest) >= 1:
                pick = c
                break
        sel.append(pick)
    while len(sel) < k:
        sel.append(default())
    return tuple(sorted(sel[:k]))


def run_full_info_pav(pop, k: int, t: int, cap: int = ENUMERATION_BUDGET) -> tuple[int, ...]:
    """Exhaustive PAV winner reconstructed from exact queries of size ``t >= k``.

    Every committee's score is computed from the first planned query that
    contains it; ties go to the lexicographically first committee.
    """
    m = pop.m
    plan = full_info_plan(m, k, t, cap)
    best, best_w = None, None
    owner = {}
    for q in plan.queries:
        for w in itertools.combinations(q, k):
            owner.setdefault(w, q)
    tables = {q: exact_query(pop, q).table() for q in plan.queries}
    for w in itertools.combinations(range(m), k):
        score = tables[owner[w]].score(w)
        if best is None or score > best:
            best, best_w = score, w
    return tuple(best_w)


def full_info_query_count(m: int, k: int, t: int) -> int:
    return len(full_info_plan(m, k, t))

