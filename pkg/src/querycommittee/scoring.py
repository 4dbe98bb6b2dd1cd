"""PAV score, marginal/swap deltas, the Delta* certificate and full-information rules.

All quantities are computed from per-voter intersection counts ``|A_i & W|``
as integer numerators over the common denominator ``total * lcm(1..k+1)``,
so ties and threshold tests (``Delta* < 1/(alpha k)``) are decided exactly.
Floats are only produced at the API boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from querycommittee._util import (
    BudgetExceeded,
    ValidationError,
    as_fraction,
    check_alpha,
    harmonic,
    lcm_upto,
    make_rng,
)

ENUMERATION_BUDGET = 2_000_000
_INT64_SAFE = 2**62


class BallotTable:
    """Weighted ballots over a fixed set of candidate columns.

    ``weights`` are integers and ``total`` their common denominator, so the
    measure of row ``r`` is ``weights[r] / total``.  Finite profiles map to
    unit weights with ``total = n``; exact query responses map to the
    numerators of their masses.
    """

    def __init__(self, approvals: np.ndarray, weights, total: int, columns: Sequence[int]):
        self.approvals = np.asarray(approvals, dtype=bool)
        self.columns = tuple(int(c) for c in columns)
        self.col = {c: j for j, c in enumerate(self.columns)}
        self.total = int(total)
        w = [int(x) for x in weights]
        self._big = max(w, default=0) * max(len(w), 1)
        self.weights = np.array(w, dtype=np.int64 if self._big < 2**40 else object)

    @classmethod
    def from_profile(cls, profile) -> "BallotTable":
        return cls(profile.approvals, np.ones(profile.n, dtype=np.int64), profile.n, range(profile.m))

    @classmethod
    def from_distribution(cls, dist: Mapping[frozenset, object], columns: Iterable[int]) -> "BallotTable":
        cols = tuple(sorted(int(c) for c in columns))
        col = {c: j for j, c in enumerate(cols)}
        types = [s for s, p in dist.items() if p]
        masses = [as_fraction(dist[s]) for s in types]
        denom = math.lcm(*(p.denominator for p in masses)) if masses else 1
        a = np.zeros((len(types), len(cols)), dtype=bool)
        for r, s in enumerate(types):
            for c in s:
                a[r, col[c]] = True
        num = [p.numerator * (denom // p.denominator) for p in masses]
        return cls(a, num, sum(num), cols)

    @classmethod
    def from_ballots(cls, ballots: Sequence[frozenset], columns: Iterable[int]) -> "BallotTable":
        """Unit-weight table from observed (restricted) ballots."""
        cols = tuple(sorted(int(c) for c in columns))
        col = {c: j for j, c in enumerate(cols)}
        a = np.zeros((len(ballots), len(cols)), dtype=bool)
        for r, s in enumerate(ballots):
            for c in s:
                if c in col:
                    a[r, col[c]] = True
        return cls(a, np.ones(len(ballots), dtype=np.int64), len(ballots), cols)

    # -- helpers -------------------------------------------------------------

    def _cols(self, cands) -> list[int]:
        try:
            return [self.col[int(c)] for c in cands]
        except KeyError as exc:
            raise ValidationError(f"candidate {exc.args[0]} is not covered by this table") from None

    def _scaled(self, per_row) -> np.ndarray:
        """weights * per_row with an overflow-safe dtype."""
        per_row = np.asarray(per_row)
        if self.weights.dtype == object or self._big * int(per_row.max(initial=0)) >= _INT64_SAFE:
            return self.weights.astype(object) * per_row.astype(object)
        return self.weights * per_row.astype(np.int64)

    def sat(self, committee) -> np.ndarray:
        return self.approvals[:, self._cols(committee)].sum(axis=1)

    # -- exact quantities ------------------------------------------------------

    def add_numerators(self, committee) -> tuple[list[int], np.ndarray, int]:
        """Numerators of Delta(W, c) for every covered ``c`` outside ``W``.

        Returns ``(candidates, numerators, denominator)``.
        """
        w = sorted({int(c) for c in committee})
        k = len(w)
        lcm = lcm_upto(k + 1)
        s = self.sat(w)
        per_row = self._scaled(lcm // (s + 1))
        outside = [j for j, c in enumerate(self.columns) if c not in set(w)]
        nums = per_row @ self.approvals[:, outside].astype(per_row.dtype)
        return [self.columns[j] for j in outside], nums, self.total * lcm

    def swap_numerators(self, committee, x: int) -> tuple[list[int], np.ndarray, int]:
        """Numerators of Delta(W, x, y) for every ``y`` in ``W`` (sorted)."""
        w = sorted({int(c) for c in committee})
        if x in w:
            raise ValidationError(f"candidate {x} is already in the committee")
        k = len(w)
        lcm = lcm_upto(k + 1)
        s = self.sat(w)
        ax = self.approvals[:, self._cols([x])[0]]
        aw = self.approvals[:, self._cols(w)]
        gain = self._scaled(lcm // (s + 1))
        loss = self._scaled(lcm // np.maximum(s, 1))
        dt = gain.dtype
        plus = (gain * ax) @ (~aw).astype(dt)
        minus = (loss * ~ax) @ aw.astype(dt)
        return w, plus - minus, self.total * lcm

    def swap_matrix(self, committee) -> tuple[list[int], list[int], np.ndarray, int]:
        """Numerators of Delta(W, x, y) for all ``x`` outside and ``y`` inside ``W``."""
        w = sorted({int(c) for c in committee})
        k = len(w)
        lcm = lcm_upto(k + 1)
        s = self.sat(w)
        outside = [j for j, c in enumerate(self.columns) if c not in set(w)]
        ax = self.approvals[:, outside]
        aw = self.approvals[:, self._cols(w)]
        gain = self._scaled(lcm // (s + 1))
        loss = self._scaled(lcm // np.maximum(s, 1))
        dt = gain.dtype
        plus = (ax.T.astype(dt) * gain) @ (~aw).astype(dt)
        minus = ((~ax).T.astype(dt) * loss) @ aw.astype(dt)
        return [self.columns[j] for j in outside], w, plus - minus, self.total * lcm

    def score(self, committee) -> Fraction:
        w = sorted({int(c) for c in committee})
        lcm = lcm_upto(max(len(w), 1))
        hl = np.array([int(harmonic(j) * lcm) for j in range(len(w) + 1)], dtype=np.int64)
        s = self.sat(w)
        num = self._scaled(hl[s]).sum()
        return Fraction(int(num), self.total * lcm)

    def delta_add(self, committee, c: int) -> Fraction:
        cands, nums, den = self.add_numerators(committee)
        if c not in cands:
            raise ValidationError(f"candidate {c} is in the committee or not covered")
        return Fraction(int(nums[cands.index(c)]), den)

    def delta_swap(self, committee, c_in: int, c_out: int) -> Fraction:
        ys, nums, den = self.swap_numerators(committee, c_in)
        if c_out not in ys:
            raise ValidationError(f"candidate {c_out} is not in the committee")
        return Fraction(int(nums[ys.index(c_out)]), den)

    def delta_star(self, committee) -> tuple[Fraction, int | None]:
        cands, nums, den = self.add_numerators(committee)
        if not cands:
            return Fraction(0), None
        j = int(np.argmax(nums))
        return Fraction(int(nums[j]), den), cands[j]

    def approval_weights(self) -> np.ndarray:
        return self._scaled(np.ones(len(self.weights), dtype=np.int64)) @ self.approvals.astype(
            self.weights.dtype)


def as_table(source) -> BallotTable:
    """Accept a FiniteProfile, a mixture population or a ready BallotTable."""
    if isinstance(source, BallotTable):
        return source
    if hasattr(source, "approvals") and hasattr(source, "n"):
        return BallotTable.from_profile(source)
    if hasattr(source, "exact_distribution"):
        return BallotTable.from_distribution(source.exact_distribution(range(source.m)), range(source.m))
    raise TypeError(f"cannot score {type(source).__name__}")


def check_committee(committee, m: int, k: int | None = None) -> tuple[int, ...]:
    w = [int(c) for c in committee]
    if len(set(w)) != len(w):
        raise ValidationError(f"committee {w} has repeated candidates")
    if any(not 0 <= c < m for c in w):
        raise ValidationError(f"committee {w} has candidates outside [0, {m})")
    if k is not None and len(w) != k:
        raise ValidationError(f"committee {w} does not have size {k}")
    return tuple(sorted(w))


def _m(source) -> int:
    return source.m if hasattr(source, "m") else len(source.columns)


@dataclass(frozen=True)
class DeltaReport:
    """Delta*(W) with the maximising addition and its best removal partner."""

    value: float
    exact: Fraction
    best_add: int | None
    best_swap_out: int | None


def pav_score(profile, committee) -> float:
    """Average harmonic utility ``(1/n) sum_i H(|A_i & W|)``."""
    w = check_committee(committee, _m(profile))
    return float(as_table(profile).score(w))


def delta_add(profile, committee, c: int) -> float:
    w = check_committee(committee, _m(profile))
    if c in w:
        raise ValidationError(f"candidate {c} is already in the committee")
    return float(as_table(profile).delta_add(w, c))


def delta_swap(profile, committee, c_in: int, c_out: int) -> float:
    """Score change from replacing ``c_out`` (in ``W``) by ``c_in`` (outside ``W``)."""
    w = check_committee(committee, _m(profile))
    if c_in in w:
        raise ValidationError(f"candidate {c_in} is already in the committee")
    if c_out not in w:
        raise ValidationError(f"candidate {c_out} is not in the committee")
    return float(as_table(profile).delta_swap(w, c_in, c_out))


def delta_star(profile, committee) -> DeltaReport:
    """Largest marginal gain over candidates outside ``W`` (0 when ``W = C``).

    Ties go to the lowest candidate index.
    """
    table = as_table(profile)
    w = check_committee(committee, _m(profile))
    value, best = table.delta_star(w)
    out = None
    if best is not None and w:
        ys, nums, _ = table.swap_numerators(w, best)
        out = ys[int(np.argmax(nums))]
    return DeltaReport(float(value), value, best, out)


def certifies(profile, committee, alpha=1) -> bool:
    """Exact test of ``Delta*(W) < 1/(alpha k)``, which implies alpha-EJR and alpha-OAS."""
    a = check_alpha(alpha)
    w = check_committee(committee, _m(profile))
    value, _ = as_table(profile).delta_star(w)
    return value * a * len(w) < 1


def alpha_hat(profile, committee) -> float:
    """``1/(k Delta*(W))``; ``inf`` when no candidate can improve ``W``."""
    w = check_committee(committee, _m(profile))
    value, _ = as_table(profile).delta_star(w)
    if value <= 0:
        return math.inf
    return float(1 / (len(w) * value))


def av_committee(profile, k: int) -> tuple[int, ...]:
    """Top-``k`` candidates by approval weight, lower index first on ties."""
    table = as_table(profile)
    m = len(table.columns)
    if not 0 <= k <= m:
        raise ValidationError(f"k={k} must lie in [0, m={m}]")
    counts = table.approval_weights()
    order = sorted(range(m), key=lambda j: (-counts[j], j))
    return tuple(sorted(table.columns[j] for j in order[:k]))


def exhaustive_pav(profile, k: int, budget: int = ENUMERATION_BUDGET) -> tuple[int, ...]:
    """Global PAV maximiser by enumeration; lexicographically first among ties."""
    table = as_table(profile)
    m = len(table.columns)
    if not 0 <= k <= m:
        raise ValidationError(f"k={k} must lie in [0, m={m}]")
    if math.comb(m, k) > budget:
        raise BudgetExceeded(f"C({m},{k}) = {math.comb(m, k)} committees exceeds budget {budget}")
    lcm = lcm_upto(max(k, 1))
    hl = np.array([int(harmonic(j) * lcm) for j in range(k + 1)], dtype=np.int64)
    best, best_w = None, None
    combos = itertools.combinations(range(m), k)
    while True:
        chunk = np.array(list(itertools.islice(combos, 2048)), dtype=np.int64).reshape(-1, k)
        if len(chunk) == 0:
            break
        sat = table.approvals[:, chunk].sum(axis=2)  # (rows, combos)
        per = hl[sat]
        if table.weights.dtype == object:
            scores = table.weights @ per.astype(object)
        else:
            scores = table.weights @ per
        j = int(np.argmax(scores))
        if best is None or scores[j] > best:
            best, best_w = scores[j], chunk[j]
    return tuple(table.columns[int(j)] for j in best_w)


def best_swap(table: BallotTable, committee) -> tuple[Fraction, int | None, int | None]:
    """Largest Delta(W, x, y) over all pairs, lexicographically first (x, y) on ties."""
    xs, ys, nums, den = table.swap_matrix(committee)
    if not xs or not ys:
        return Fraction(0), None, None
    flat = int(np.argmax(nums))  # row-major: x first, then y
    i, j = divmod(flat, len(ys))
    return Fraction(int(nums[i, j]), den), xs[i], ys[j]


def ls_pav(profile, k: int, seed: int = 0, initial=None, max_swaps: int | None = None) -> tuple[int, ...]:
    """Local-search PAV: apply best swaps while one gains at least ``1/k^2``.

    Each swap raises the score by at least ``1/k^2`` and the score never
    exceeds ``H_k``, so at most ``k^2 H_k`` swaps happen.
    """
    table = as_table(profile)
    m = len(table.columns)
    if not 0 <= k <= m:
        raise ValidationError(f"k={k} must lie in [0, m={m}]")
    if initial is None:
        rng = make_rng(seed)
        w = sorted(int(table.columns[j]) for j in rng.choice(m, size=k, replace=False))
    else:
        w = list(check_committee(initial, m, k))
    if k == 0 or k == m:
        return tuple(w)
    threshold = Fraction(1, k * k)
    limit = max_swaps if max_swaps is not None else math.ceil(k * k * float(harmonic(k))) + 1
    for _ in range(limit):
        gain, x, y = best_swap(table, w)
        if x is None or gain < threshold:
            break
        w.remove(y)
        w.append(x)
        w.sort()
    return tuple(w)
