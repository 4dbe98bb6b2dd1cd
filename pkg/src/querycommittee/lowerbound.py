"""Search for adversarial subset distributions behind the non-adaptive lower bounds.

A distribution ``x`` over subsets of ``[ell]`` fools every non-adaptive
algorithm that never queries more than ``h`` hidden candidates at once when

1. all marginals ``sum_{S >= T} x_S`` agree across sets ``T`` of equal size
   ``<= h``, and
2. the lone set ``{s*}`` carries mass at least ``1/k0``.

Averaging over permutations that fix ``s*`` preserves both conditions, so
it suffices to search symmetric distributions: ``x_{0,j}`` is the mass of
each ``j``-set avoiding ``s*`` and ``x_{1,j}`` the mass of each set made of
``s*`` and ``j`` others.  These ``2 ell`` numbers range over the polyhedron
``P(h, k0, ell)``, which is searched here with an exact rational simplex.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable

import numpy as np

from querycommittee._simplex import check_farkas, solve_lp
from querycommittee._util import BudgetExceeded, ValidationError, as_fraction, make_rng
from querycommittee.fairness import check_jr_measure
from querycommittee.profiles import AdversaryPopulation, SubsetDistribution
from querycommittee.nonadaptive import run_nonadaptive_greedy
from querycommittee.queries import exact_query

MAX_EXPANDED_SETS = 1 << 20


@dataclass(frozen=True)
class SymmetricPoint:
    ell: int
    x0: tuple
    x1: tuple

    def __post_init__(self):
        if len(self.x0) != self.ell or len(self.x1) != self.ell:
            raise ValidationError("x0 and x1 must each have ell entries")
        if any(v < 0 for v in (*self.x0, *self.x1)):
            raise ValidationError("symmetric point has negative entries")

    def value(self, i: int, j: int):
        return (self.x0, self.x1)[i][j]

    def total(self):
        return sum(comb(self.ell - 1, j) * (self.x0[j] + self.x1[j]) for j in range(self.ell))

    def to_dict(self) -> dict:
        return {"ell": self.ell, "x0": [str(v) for v in self.x0], "x1": [str(v) for v in self.x1]}

    @classmethod
    def from_sparse(cls, ell: int, values: dict[tuple[int, int], object]) -> "SymmetricPoint":
        x0, x1 = [0] * ell, [0] * ell
        for (i, j), v in values.items():
            (x0, x1)[i][j] = v
        return cls(ell, tuple(x0), tuple(x1))


@dataclass(frozen=True)
class Constraint:
    coeffs: dict  # variable index -> int
    sense: str  # "=" or ">="
    rhs: Fraction
    name: str


@dataclass
class PolyhedronSpec:
    """Linear description of ``P(h, k0, ell)`` over variables ``x_{i,j}``.

    Variable ``x_{i,j}`` has index ``i * ell + j``.  Nonnegativity of all
    ``2 ell`` variables is implicit in the solver and counted in
    ``counts``.
    """

    h: int
    k0: int
    ell: int
    constraints: list = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return 2 * self.ell

    @property
    def counts(self) -> dict[str, int]:
        kinds = {"normalization": 0, "marginal": 0, "cohesion": 0}
        for c in self.constraints:
            kinds[c.name.split("[")[0]] += 1
        kinds["nonnegativity"] = self.n_vars
        return kinds

    def residuals(self, point: SymmetricPoint) -> list[Fraction]:
        """Signed violation per constraint (0 when satisfied)."""
        vals = [*point.x0, *point.x1]
        out = []
        for c in self.constraints:
            lhs = sum(as_fraction(vals[j]) * a for j, a in c.coeffs.items())
            diff = lhs - c.rhs
            out.append(diff if c.sense == "=" else min(diff, Fraction(0)))
        out.extend(min(as_fraction(v), Fraction(0)) for v in vals)
        return out


def build_polyhedron(h: int, k0: int, ell: int) -> PolyhedronSpec:
    if not 0 <= h <= k0 <= ell:
        raise ValidationError(f"need 0 <= h <= k0 <= ell, got h={h}, k0={k0}, ell={ell}")
    if ell < 1:
        raise ValidationError("ell must be positive")
    idx = lambda i, j: i * ell + j  # noqa: E731
    spec = PolyhedronSpec(h, k0, ell)
    norm = {}
    for i in (0, 1):
        for j in range(ell):
            norm[idx(i, j)] = comb(ell - 1, j)
    spec.constraints.append(Constraint(norm, "=", Fraction(1), "normalization"))
    for tp in range(1, h + 1):
        row: dict[int, int] = {}
        for i in (0, 1):
            for j in range(tp, ell):
                row[idx(i, j)] = row.get(idx(i, j), 0) + comb(ell - 1 - tp, j - tp)
        for j in range(tp - 1, ell):
            row[idx(1, j)] = row.get(idx(1, j), 0) - comb(ell - tp, j - tp + 1)
        row = {v: a for v, a in row.items() if a}
        spec.constraints.append(Constraint(row, "=", Fraction(0), f"marginal[{tp}]"))
    spec.constraints.append(Constraint({idx(1, 0): 1}, ">=", Fraction(1, k0), "cohesion"))
    return spec


@dataclass
class FeasibilityResult:
    feasible: bool
    point: SymmetricPoint | None = None
    objective: Fraction | None = None
    certificate: list | None = None
    certificate_valid: bool | None = None
    pivots: int = 0

    def to_dict(self) -> dict:
        out = {"feasible": self.feasible, "pivots": self.pivots}
        if self.point is not None:
            out["point"] = {f"x_{i},{j}": str(self.point.value(i, j))
                            for i in (0, 1) for j in range(self.point.ell) if self.point.value(i, j)}
        if self.objective is not None:
            out["objective"] = str(self.objective)
            out["objective_float"] = float(self.objective)
        if self.certificate is not None:
            out["certificate"] = [str(v) for v in self.certificate]
            out["certificate_valid"] = self.certificate_valid
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _standard_form(spec: PolyhedronSpec):
    """Equality system over ``x`` plus one surplus column per ``>=`` row."""
    n = spec.n_vars
    surplus = [c for c in spec.constraints if c.sense == ">="]
    width = n + len(surplus)
    a, b = [], []
    s = 0
    for c in spec.constraints:
        row = [Fraction(0)] * width
        for j, v in c.coeffs.items():
            row[j] = Fraction(v)
        if c.sense == ">=":
            row[n + s] = Fraction(-1)
            s += 1
        a.append(row)
        b.append(c.rhs)
    return a, b


def solve_feasibility(spec: PolyhedronSpec, maximize_x10: bool = False,
                      max_pivots: int = 100_000) -> FeasibilityResult:
    """Decide whether ``P(h, k0, ell)`` is empty, exactly.

    Feasible answers carry a vertex (the one maximising ``x_{1,0}`` when
    requested); infeasible ones carry a verified Farkas vector for the
    standard-form system (one multiplier per constraint row).
    """
    a, b = _standard_form(spec)
    cost = None
    if maximize_x10:
        cost = [Fraction(0)] * len(a[0])
        cost[spec.ell] = Fraction(-1)
    out = solve_lp(a, b, cost, max_pivots=max_pivots)
    if out.status == "infeasible":
        return FeasibilityResult(False, certificate=out.farkas,
                                 certificate_valid=check_farkas(a, b, out.farkas), pivots=out.pivots)
    x = out.x[:spec.n_vars]
    point = SymmetricPoint(spec.ell, tuple(x[:spec.ell]), tuple(x[spec.ell:]))
    if any(r != 0 for r in spec.residuals(point)):
        raise AssertionError("simplex returned a point outside the polyhedron")
    return FeasibilityResult(True, point, point.x1[0], pivots=out.pivots)


def point_to_distribution(point: SymmetricPoint, s_star: int = 1,
                          max_sets: int = MAX_EXPANDED_SETS) -> SubsetDistribution:
    """Expand a symmetric point into explicit set weights over ``[ell]``."""
    ell = point.ell
    others = [e for e in range(1, ell + 1) if e != s_star]
    n_sets = sum(comb(ell - 1, j) for j in range(ell)
                 if point.x0[j] or point.x1[j])
    if n_sets > max_sets:
        raise BudgetExceeded(f"expansion needs {n_sets} sets (cap {max_sets})")
    entries = {}
    for j in range(ell):
        for i in (0, 1):
            v = point.value(i, j)
            if not v:
                continue
            for combo in itertools.combinations(others, j):
                s = frozenset(combo) | ({s_star} if i else frozenset())
                entries[s] = v
    return SubsetDistribution(ell, entries, s_star)


def symmetrize(x: SubsetDistribution) -> SymmetricPoint:
    """Average ``x`` over all permutations of ``[ell]`` fixing ``s*``."""
    ell, star = x.ell, x.s_star
    tot0, tot1 = [0] * ell, [0] * ell
    for s, w in x.entries.items():
        if star in s:
            tot1[len(s) - 1] += w
        else:
            tot0[len(s)] += w
    x0 = tuple(as_fraction(t) / comb(ell - 1, j) for j, t in enumerate(tot0))
    x1 = tuple(as_fraction(t) / comb(ell - 1, j) for j, t in enumerate(tot1))
    return SymmetricPoint(ell, x0, x1)


@dataclass
class DistributionVerdict:
    passed: bool
    marginal_residual: float  # worst relative spread of equal-size marginals
    cohesion_margin: object  # x_{s*} - 1/k0 (negative means condition 2 fails)
    normalization_residual: float
    worst_size: int | None = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "marginal_residual": self.marginal_residual,
                "cohesion_margin": str(self.cohesion_margin),
                "normalization_residual": self.normalization_residual,
                "worst_size": self.worst_size}


def _rel(a, b) -> float:
    a, b = float(a), float(b)
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def verify_distribution(x, h: int, k0: int, rel_tol: float = 0.0) -> DistributionVerdict:
    """Check both lower-bound conditions on an explicit or symmetric distribution.

    For a :class:`SubsetDistribution`, condition 1 is checked by summing
    marginals of every ``T`` with ``|T| <= h``.  For a
    :class:`SymmetricPoint` the marginal of a ``t``-set with and without
    ``s*`` are compared in closed form, which also handles points too large
    to expand.  ``rel_tol = 0`` demands exact equality.
    """
    if isinstance(x, SymmetricPoint):
        return _verify_symmetric(x, h, k0, rel_tol)
    worst, worst_size = 0.0, None
    ell = x.ell
    for size in range(1, h + 1):
        vals = [x.marginal(t) for t in itertools.combinations(range(1, ell + 1), size)]
        lo, hi = min(vals), max(vals)
        r = _rel(lo, hi) if rel_tol else (0.0 if lo == hi else _rel(lo, hi) or float("inf"))
        if r > worst:
            worst, worst_size = r, size
    margin = as_fraction(x.weight({x.s_star})) - Fraction(1, k0)
    norm = abs(float(sum(x.entries.values())) - 1.0)
    ok = worst <= rel_tol and margin >= (-rel_tol / k0 if rel_tol else 0)
    return DistributionVerdict(bool(ok), worst, margin, norm, worst_size)


def _verify_symmetric(p: SymmetricPoint, h: int, k0: int, rel_tol: float) -> DistributionVerdict:
    ell = p.ell
    exact = rel_tol == 0
    conv = as_fraction if exact else float
    x0, x1 = [conv(v) for v in p.x0], [conv(v) for v in p.x1]
    worst, worst_size = 0.0, None
    for tp in range(1, h + 1):
        without = sum(comb(ell - 1 - tp, j - tp) * (x0[j] + x1[j]) for j in range(tp, ell))
        with_star = sum(comb(ell - tp, j - tp + 1) * x1[j] for j in range(tp - 1, ell))
        r = _rel(without, with_star)
        if exact and without != with_star:
            r = r or float("inf")
        if r > worst:
            worst, worst_size = r, tp
    margin = (as_fraction(p.x1[0]) if exact else Fraction(repr(float(p.x1[0])))) - Fraction(1, k0)
    total = sum(comb(ell - 1, j) * (x0[j] + x1[j]) for j in range(ell))
    norm = abs(float(total) - 1.0)
    ok = worst <= rel_tol and norm <= rel_tol and (margin >= 0 or (not exact and float(-margin) * k0 <= rel_tol))
    return DistributionVerdict(bool(ok), worst, margin, norm, worst_size)


# -- non-adaptive strategies against the adversary -------------------------------------

Strategy = Callable[[AdversaryPopulation, np.random.Generator], tuple]


def uninformed_strategy(pop: AdversaryPopulation, rng: np.random.Generator) -> tuple[int, ...]:
    """Query singletons only, then guess inside each block.

    Picks every spare candidate that carries approval mass (the singleton
    parties), then ``k0`` uniformly random candidates with positive marginal
    in each block, padding with the lowest unused indices.
    """
    masses = {c: exact_query(pop, [c]).mass({c}) for c in range(pop.m)}
    w = [c for c in pop.spare if masses[c] > 0][:pop.r]
    for part in pop.parts:
        live = [c for c in part if masses[c] > 0]
        take = min(pop.k0, len(live))
        w.extend(int(c) for c in rng.choice(live, size=take, replace=False))
    for c in range(pop.m):
        if len(w) >= pop.k:
            break
        if c not in w:
            w.append(c)
    return tuple(sorted(w[:pop.k]))


def pairwise_strategy(pop: AdversaryPopulation, rng: np.random.Generator, t: int = 2) -> tuple[int, ...]:
    """The greedy JR rule over all ``t``-subset queries (``t = h + 1`` breaks the symmetry)."""
    return run_nonadaptive_greedy(pop, pop.k, t)


def empirical_jr_failure(x: SubsetDistribution, m: int, k: int, k0: int, strategy: Strategy,
                         trials: int = 1000, seed: int = 0) -> float:
    """Fraction of hidden-set draws for which ``strategy`` returns a JR-violating committee.

    JR is audited on the exact mixture measure.  Trial ``i`` draws its
    hidden sets from seed ``(seed, i)`` and hands the strategy its own
    child stream.
    """
    if trials < 1:
        raise ValidationError("trials must be positive")
    fails = 0
    for i in range(trials):
        trial_seed = int(make_rng(seed, i, 0).integers(2**63))
        pop = AdversaryPopulation(x, m, k, k0, trial_seed)
        w = strategy(pop, make_rng(seed, i, 1))
        if not check_jr_measure(pop, w, k).satisfied:
            fails += 1
    return fails / trials


def table2_point() -> SymmetricPoint:
    """The published (4-significant-figure) vertex of ``P(10, 72, 73)``."""
    vals = {(1, 0): 0.01398, (0, 2): 3.204e-4, (1, 5): 1.184e-9, (0, 13): 1.012e-15,
            (1, 20): 4.781e-20, (0, 31): 7.926e-23, (1, 41): 5.799e-23, (0, 52): 1.875e-20,
            (1, 59): 2.058e-16, (0, 67): 8.968e-11, (1, 70): 4.577e-6}
    return SymmetricPoint.from_sparse(73, vals)
