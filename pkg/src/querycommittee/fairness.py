"""Brute-force JR, alpha-EJR and alpha-OAS audits with explicit witnesses.

Large/cohesive thresholds are compared in exact integer arithmetic: with
``alpha = p/q`` a group ``V`` is ``(l/alpha)``-large iff
``|V| * p * k >= l * n * q``.

Cohesive sets are enumerated as *closures*, i.e. intersections of actual
ballots.  If some ``T`` is supported by a violating group ``V``, the
intersection of ``V``'s ballots contains ``T`` and is supported by a superset
of ``V``, so checking closures loses nothing.  ``method="raw"`` enumerates
every candidate subset instead and is kept as a cross-check.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from querycommittee._util import BudgetExceeded, ValidationError, check_alpha, lcm_upto
from querycommittee.profiles import FiniteProfile
from querycommittee.scoring import as_table, check_committee

ENUMERATION_CAP = 2_000_000


@dataclass(frozen=True)
class Witness:
    candidates: tuple[int, ...]
    voters: tuple[int, ...]
    level: Fraction


@dataclass(frozen=True)
class FairnessReport:
    property: str
    alpha: Fraction
    satisfied: bool
    witness: Witness | None = None

    def __post_init__(self):
        if self.satisfied != (self.witness is None):
            raise ValueError("a witness is present exactly when the property is violated")

    @property
    def verdict(self) -> str:
        return "satisfied" if self.satisfied else "violated"

    def to_dict(self) -> dict:
        out = {"property": self.property, "alpha": str(self.alpha), "verdict": self.verdict,
               "witness": None}
        if self.witness is not None:
            out["witness"] = {"candidates": list(self.witness.candidates),
                              "voters": list(self.witness.voters),
                              "level": str(self.witness.level)}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _setup(profile: FiniteProfile, committee, alpha=1):
    w = check_committee(committee, profile.m)
    if not w:
        raise ValidationError("committee must be nonempty")
    a = check_alpha(alpha)
    sat = profile.approvals[:, list(w)].sum(axis=1)
    return w, a, sat


def _large(size: int, level, n: int, k: int, a: Fraction) -> bool:
    """``size >= (level / alpha) * (n / k)``, exactly."""
    return size * a.numerator * k >= Fraction(level) * n * a.denominator


def closures(profile: FiniteProfile, cap: int = ENUMERATION_CAP) -> list[tuple[int, ...]]:
    """All nonempty intersections of nonempty sets of ballots, sorted."""
    masks = {sum(1 << c for c in b) for b in profile.ballots}
    masks.discard(0)
    seen = set(masks)
    frontier = list(masks)
    while frontier:
        nxt = []
        for x in frontier:
            for b in masks:
                y = x & b
                if y and y not in seen:
                    seen.add(y)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise BudgetExceeded(f"more than {cap} cohesive closures")
        frontier = nxt
    out = [tuple(c for c in range(profile.m) if x >> c & 1) for x in seen]
    return sorted(out, key=lambda t: (len(t), t))


def _candidate_sets(profile, max_size: int, method: str, cap: int):
    if method == "closure":
        return closures(profile, cap)
    if method == "raw":
        sets = []
        for size in range(1, max_size + 1):
            if math.comb(profile.m, size) > cap:
                raise BudgetExceeded(f"C({profile.m},{size}) exceeds enumeration cap {cap}")
            sets.extend(itertools.combinations(range(profile.m), size))
        return sets
    raise ValidationError(f"unknown method {method!r}")


def _supporters(profile, t) -> np.ndarray:
    return profile.approvals[:, list(t)].all(axis=1)


def check_jr(profile: FiniteProfile, committee) -> FairnessReport:
    """JR: no ``n/k`` voters share an approved candidate while approving nobody in ``W``.

    >>> from querycommittee.profiles import build_finite_profile
    >>> check_jr(build_finite_profile([{0}, {1, 2}], 3), [1, 2]).witness.candidates
    (0,)
    """
    w, _, sat = _setup(profile, committee)
    n, k = profile.n, len(w)
    unhappy = sat == 0
    for c in range(profile.m):
        if c in w:
            continue
        group = profile.approvals[:, c] & unhappy
        size = int(group.sum())
        if size and size * k >= n:
            return FairnessReport("JR", Fraction(1), False,
                                  Witness((c,), tuple(np.flatnonzero(group).tolist()), Fraction(1)))
    return FairnessReport("JR", Fraction(1), True)


def check_jr_measure(population, committee, k: int | None = None) -> FairnessReport:
    """JR against a population measure instead of a finite voter list.

    Violated iff some ``c`` outside ``W`` carries at least ``1/k`` of the mass
    approving ``c`` and nobody in ``W``.  Witness voters are left empty.
    """
    w = tuple(sorted(int(c) for c in committee))
    k = len(w) if k is None else k
    for c in range(population.m):
        if c in w:
            continue
        mass = population.exclusive_mass(c, w)
        if mass * k >= 1:
            return FairnessReport("JR", Fraction(1), False, Witness((c,), (), Fraction(1)))
    return FairnessReport("JR", Fraction(1), True)


def check_ejr(profile: FiniteProfile, committee, alpha=1, method: str = "closure",
              cap: int = ENUMERATION_CAP) -> FairnessReport:
    """alpha-EJR: every ``(l/alpha)``-large, ``l``-cohesive group has a voter with ``l`` members in ``W``."""
    w, a, sat = _setup(profile, committee, alpha)
    n, k = profile.n, len(w)
    sets = _candidate_sets(profile, k, method, cap)
    supports = [_supporters(profile, t) for t in sets]
    for level in range(1, k + 1):
        low = sat < level
        for t, supp in zip(sets, supports):
            if len(t) < level:
                continue
            group = supp & low
            if _large(int(group.sum()), level, n, k, a):
                tt = t[:level]
                group = _supporters(profile, tt) & low
                return FairnessReport("EJR", a, False,
                                      Witness(tt, tuple(np.flatnonzero(group).tolist()), Fraction(level)))
    return FairnessReport("EJR", a, True)


def check_oas(profile: FiniteProfile, committee, alpha=1, method: str = "closure",
              cap: int = ENUMERATION_CAP) -> FairnessReport:
    """alpha-OAS via the prefix characterisation.

    For a cohesive set ``T`` (truncated to ``tau = min(|T|, k)``) a violation
    exists iff some group ``V`` of supporters has
    ``avs_W(V) < min(tau, alpha |V| k / n - 1)``.  For fixed ``|V|`` the
    supporters with the fewest committee approvals minimise ``avs``, so only
    prefixes of the supporters sorted by satisfaction need testing.  The
    witness level is the largest violated ``lambda``.
    """
    w, a, sat = _setup(profile, committee, alpha)
    n, k = profile.n, len(w)
    p, q = a.numerator, a.denominator
    for t in _candidate_sets(profile, k, method, cap):
        tau = min(len(t), k)
        idx = np.flatnonzero(_supporters(profile, t))
        if len(idx) == 0:
            continue
        order = idx[np.lexsort((idx, sat[idx]))]
        s = np.cumsum(sat[order])
        j = np.arange(1, len(order) + 1)
        bad = (s < tau * j) & ((s + j) * n * q < p * j * j * k)
        if bad.any():
            size = int(np.argmax(bad)) + 1
            level = min(Fraction(tau), Fraction(p * size * k, q * n) - 1)
            return FairnessReport("OAS", a, False,
                                  Witness(t[:tau], tuple(sorted(order[:size].tolist())), level))
    return FairnessReport("OAS", a, True)


def avs(profile: FiniteProfile, committee, voters) -> Fraction:
    """Average number of committee members approved by ``voters``."""
    w = check_committee(committee, profile.m)
    v = sorted({int(i) for i in voters})
    if not v:
        raise ValidationError("voter group must be nonempty")
    return Fraction(int(profile.approvals[np.ix_(v, list(w))].sum()), len(v))


def avs_lower_bound(profile: FiniteProfile, committee, voters) -> Fraction:
    """``min(|common approvals of V|, |V| / (n Delta*(W)) - 1)``.

    The second term is dropped when ``Delta*(W) = 0``.
    """
    w = check_committee(committee, profile.m)
    v = sorted({int(i) for i in voters})
    if not v:
        raise ValidationError("voter group must be nonempty")
    common = Fraction(int(profile.approvals[v].all(axis=0).sum()))
    dstar, _ = as_table(profile).delta_star(w)
    if dstar == 0:
        return common
    return min(common, Fraction(len(v)) / (profile.n * dstar) - 1)


def validate_witness(profile: FiniteProfile, committee, report: FairnessReport) -> bool:
    """Re-check a witness against the raw definition of its property."""
    if report.witness is None:
        return False
    w = check_committee(committee, profile.m)
    n, k, a = profile.n, len(w), report.alpha
    t, v, level = report.witness.candidates, list(report.witness.voters), report.witness.level
    if not v:
        return False
    common = profile.approvals[v].all(axis=0)
    cohesive = all(common[c] for c in t)
    sat = profile.approvals[np.ix_(v, list(w))].sum(axis=1)
    if report.property == "JR":
        return (cohesive and len(t) >= 1 and _large(len(v), 1, n, k, Fraction(1))
                and bool((sat == 0).all()))
    if report.property == "EJR":
        return (cohesive and len(t) >= level and _large(len(v), level, n, k, a)
                and bool((sat < level).all()))
    if report.property == "OAS":
        return (cohesive and len(t) >= level and 0 <= level <= k
                and _large(len(v), level + 1, n, k, a)
                and Fraction(int(sat.sum()), len(v)) < level)
    return False


def batch_audit(counts: np.ndarray, m: int, committee, alpha=1) -> dict[str, np.ndarray]:
    """Audit many profiles at once, each given as ballot-type counts.

    ``counts[p, b]`` is the number of voters in profile ``p`` whose approval
    set has bitmask ``b`` (``0 <= b < 2**m``).  Every quantity involved
    (group sizes, satisfaction level counts, Delta* numerators) is linear in
    the counts, so the audit reduces to integer matrix products.  Cohesive
    sets are enumerated raw (every candidate subset of size <= k).

    Returns boolean arrays ``certified`` (Delta* < 1/(alpha k)), ``ejr`` and
    ``oas`` (property satisfied).
    """
    a = check_alpha(alpha)
    return batch_audit_alphas(counts, m, committee, (a,))[a]


def batch_audit_alphas(counts: np.ndarray, m: int, committee, alphas) -> dict:
    """:func:`batch_audit` for several values of alpha in one pass.

    The per-cohesive-set level counts do not depend on alpha, so sharing
    them across alphas costs little more than a single audit.  Returns a
    dict mapping each alpha (as a Fraction) to the arrays of
    :func:`batch_audit`.

    Products run in float64 for BLAS speed; every operand is an integer far
    below 2**53, so the arithmetic and all comparisons stay exact.
    """
    fracs = [check_alpha(x) for x in alphas]
    if not fracs:
        raise ValidationError("need at least one alpha")
    w = check_committee(committee, m)
    k = len(w)
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[1] != 2**m or (counts < 0).any():
        raise ValidationError(f"counts must be a nonnegative (P, {2**m}) array")
    big = max(max(a.numerator, a.denominator) for a in fracs)
    if counts.sum(axis=1).max(initial=0) * lcm_upto(k + 1) * big * max(k, 1) >= 2**52:
        raise ValidationError("counts too large for exact float arithmetic")
    counts = counts.astype(np.float64)
    n = counts.sum(axis=1)
    types = np.arange(2**m)
    bits = ((types[:, None] >> np.arange(m)) & 1).astype(bool)
    sat = bits[:, list(w)].sum(axis=1)

    outside = [c for c in range(m) if c not in w]
    lcm = lcm_upto(k + 1)
    if outside:
        gain = (bits[:, outside] * (lcm // (sat + 1))[:, None]).astype(np.float64)
        dstar = (counts @ gain).max(axis=1)
    else:
        dstar = np.zeros(len(counts))

    out = {a: {"certified": dstar * a.numerator * k < n * lcm * a.denominator,
               "ejr": np.ones(len(counts), dtype=bool),
               "oas": np.ones(len(counts), dtype=bool)} for a in fracs}
    jmax = int(n.max(initial=0))
    satisfaction = np.arange(k + 1, dtype=np.float64)
    for size in range(1, k + 1):
        for t in itertools.combinations(range(m), size):
            supp = bits[:, list(t)].all(axis=1)
            # EJR at level `size` for this exact T
            group = counts @ (supp & (sat < size))
            for a in fracs:
                out[a]["ejr"] &= ~(group * a.numerator * k >= size * n * a.denominator)
            # OAS: supporter counts per satisfaction level, then prefixes
            levels = counts @ np.stack([supp & (sat == s) for s in range(k + 1)], axis=1)
            before = np.cumsum(levels, axis=1) - levels
            total = levels.sum(axis=1)
            for j in range(1, jmax + 1):
                taken = np.clip(j - before, 0, levels)
                s = taken @ satisfaction
                short = (j <= total) & (s < size * j)
                if not short.any():
                    continue
                for a in fracs:
                    out[a]["oas"] &= ~(short & ((s + j) * n * a.denominator < a.numerator * j * j * k))
    return out
