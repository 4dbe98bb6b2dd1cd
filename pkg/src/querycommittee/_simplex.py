"""Exact two-phase simplex over Fractions with Bland's rule.

Solves ``min c.x  s.t.  A x = b, x >= 0``.  Infeasibility comes with a
Farkas vector ``y`` such that ``A^T y >= 0`` and ``b.y < 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from querycommittee._util import BudgetExceeded

ZERO = Fraction(0)


@dataclass
class LpOutcome:
    status: str  # "optimal" or "infeasible"
    x: list[Fraction] | None = None
    objective: Fraction | None = None
    farkas: list[Fraction] | None = None
    pivots: int = 0


class _Tableau:
    def __init__(self, rows: list[list[Fraction]], rhs: list[Fraction], basis: list[int]):
        self.rows, self.rhs, self.basis = rows, rhs, basis
        self.pivots = 0

    def pivot(self, r: int, j: int):
        row, piv = self.rows[r], self.rows[r][j]
        if piv != 1:
            inv = 1 / piv
            self.rows[r] = row = [v * inv for v in row]
            self.rhs[r] *= inv
        for i, other in enumerate(self.rows):
            f = other[j]
            if i != r and f:
                self.rows[i] = [a - f * b if b else a for a, b in zip(other, row)]
                self.rhs[i] -= f * self.rhs[r]
        self.basis[r] = j
        self.pivots += 1

    def reduced_costs(self, cost: Sequence[Fraction], allowed: int) -> list[Fraction]:
        cb = [cost[b] for b in self.basis]
        out = []
        for j in range(allowed):
            d = cost[j]
            for cbi, row in zip(cb, self.rows):
                if cbi and row[j]:
                    d -= cbi * row[j]
            out.append(d)
        return out

    def run(self, cost: Sequence[Fraction], allowed: int, max_pivots: int):
        """Minimise ``cost`` using columns ``< allowed`` (Bland's rule)."""
        while True:
            if self.pivots >= max_pivots:
                raise BudgetExceeded(f"simplex exceeded {max_pivots} pivots")
            d = self.reduced_costs(cost, allowed)
            enter = next((j for j, v in enumerate(d) if v < 0), None)
            if enter is None:
                return
            best = None
            for r, row in enumerate(self.rows):
                if row[enter] > 0:
                    ratio = self.rhs[r] / row[enter]
                    key = (ratio, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                raise ValueError("objective is unbounded")
            self.pivot(best[1], enter)


def solve_lp(a: Sequence[Sequence[Fraction]], b: Sequence[Fraction], c: Sequence[Fraction] | None = None,
             max_pivots: int = 100_000) -> LpOutcome:
    m_rows, n = len(a), len(a[0]) if a else 0
    sign = [(-1 if bi < 0 else 1) for bi in b]
    rows = [[Fraction(v) * s for v in row] + [Fraction(int(i == r)) for i in range(m_rows)]
            for r, (row, s) in enumerate(zip(a, sign))]
    rhs = [Fraction(bi) * s for bi, s in zip(b, sign)]
    tab = _Tableau(rows, rhs, [n + r for r in range(m_rows)])
    phase1 = [ZERO] * n + [Fraction(1)] * m_rows
    tab.run(phase1, n + m_rows, max_pivots)
    infeas = sum((tab.rhs[r] for r, bv in enumerate(tab.basis) if bv >= n), ZERO)
    if infeas > 0:
        # duals of the sign-normalised system: y_i = c_B^T B^{-1} e_i
        y = [sum((phase1[bv] * tab.rows[r][n + i] for r, bv in enumerate(tab.basis)), ZERO)
             for i in range(m_rows)]
        farkas = [-yi * s for yi, s in zip(y, sign)]
        return LpOutcome("infeasible", farkas=farkas, pivots=tab.pivots)
    # drive zero-level artificials out of the basis, dropping redundant rows
    r = 0
    while r < len(tab.basis):
        if tab.basis[r] >= n:
            j = next((j for j in range(n) if tab.rows[r][j] != 0), None)
            if j is None:
                del tab.rows[r], tab.rhs[r], tab.basis[r]
                continue
            tab.pivot(r, j)
        r += 1
    cost = [Fraction(v) for v in c] if c is not None else [ZERO] * n
    tab.run(cost + [ZERO] * m_rows, n, max_pivots)
    x = [ZERO] * n
    for r, bv in enumerate(tab.basis):
        x[bv] = tab.rhs[r]
    return LpOutcome("optimal", x=x, objective=sum((ci * xi for ci, xi in zip(cost, x)), ZERO),
                     pivots=tab.pivots)


def check_farkas(a, b, y) -> bool:
    """``A^T y >= 0`` and ``b.y < 0``: no ``x >= 0`` solves ``A x = b``."""
    n = len(a[0])
    cols_ok = all(sum((row[j] * yi for row, yi in zip(a, y)), ZERO) >= 0 for j in range(n))
    return cols_ok and sum((bi * yi for bi, yi in zip(b, y)), ZERO) < 0
