"""Voter populations and instance generators.

Every population answers two kinds of question about a query set ``Q``:

* ``exact_distribution(Q)``: the share of voters whose approvals restricted
  to ``Q`` equal each subset ``S`` of ``Q`` (sparse, only positive mass);
* ``sample(Q, rng)``: the restricted ballot of one voter drawn at random.

Candidates are integers ``0 .. m-1``.  Rational populations (finite profiles,
mixtures with Fraction weights, product populations with rational
probabilities) return exact :class:`fractions.Fraction` masses.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from querycommittee._util import ValidationError, as_fraction, make_rng


# desk-scale limits
MAX_VOTERS = 10**6
MAX_CANDIDATES = 5000
MAX_PRODUCT_QUERY = 22


class Population(Protocol):
    m: int

    def exact_distribution(self, query: Iterable[int]) -> dict[frozenset, Fraction]: ...

    def sample(self, query: Iterable[int], rng: np.random.Generator) -> frozenset: ...

    def exclusive_mass(self, c: int, committee: Iterable[int]) -> Fraction: ...


def _check_query(query, m: int) -> tuple[int, ...]:
    q = tuple(sorted({int(c) for c in query}))
    if not q:
        raise ValidationError("query must be nonempty")
    if q[0] < 0 or q[-1] >= m:
        raise ValidationError(f"query {q} has candidates outside [0, {m})")
    return q


def _exclusive_from_distribution(pop, c: int, committee) -> Fraction:
    w = {int(x) for x in committee}
    if c in w:
        return Fraction(0)
    dist = pop.exact_distribution(w | {c})
    return sum((p for s, p in dist.items() if c in s and not (s & w)), Fraction(0))


class FiniteProfile:
    """``n`` voters over ``m`` candidates, stored as a boolean approval matrix.

    ``original_index[j]`` is the identifier candidate ``j`` had before any
    filtering; ``labels`` optionally carries display names (comment ids).
    """

    def __init__(self, approvals: np.ndarray, labels: Sequence[str] | None = None,
                 original_index: Sequence[int] | None = None):
        a = np.array(approvals, dtype=bool, copy=True)
        if a.ndim != 2:
            raise ValidationError("approval matrix must be 2-dimensional")
        n, m = a.shape
        if n < 1:
            raise ValidationError("a profile needs at least one voter")
        if m < 1:
            raise ValidationError("a profile needs at least one candidate")
        if n > MAX_VOTERS or m > MAX_CANDIDATES:
            raise ValidationError(f"profile {n}x{m} exceeds desk-scale limits")
        a.setflags(write=False)
        self.approvals = a
        self.n, self.m = n, m
        self.labels = tuple(str(x) for x in labels) if labels is not None else None
        if self.labels is not None and len(self.labels) != m:
            raise ValidationError("labels must have one entry per candidate")
        self.original_index = (tuple(int(x) for x in original_index)
                               if original_index is not None else tuple(range(m)))
        if len(self.original_index) != m:
            raise ValidationError("original_index must have one entry per candidate")

    def __repr__(self):
        return f"FiniteProfile(n={self.n}, m={self.m})"

    def __eq__(self, other):
        return (isinstance(other, FiniteProfile)
                and self.approvals.shape == other.approvals.shape
                and bool(np.array_equal(self.approvals, other.approvals)))

    __hash__ = None

    @property
    def ballots(self) -> list[frozenset]:
        return [frozenset(np.flatnonzero(row).tolist()) for row in self.approvals]

    def approval_counts(self) -> np.ndarray:
        return self.approvals.sum(axis=0)

    def label(self, c: int) -> str:
        return self.labels[c] if self.labels is not None else str(self.original_index[c])

    def exact_distribution(self, query) -> dict[frozenset, Fraction]:
        q = _check_query(query, self.m)
        sub = self.approvals[:, q]
        if len(q) <= 62:
            codes = sub.astype(np.int64) @ (np.int64(1) << np.arange(len(q), dtype=np.int64))
            uniq, counts = np.unique(codes, return_counts=True)
            out = {}
            for code, cnt in zip(uniq.tolist(), counts.tolist()):
                s = frozenset(q[b] for b in range(len(q)) if code >> b & 1)
                out[s] = Fraction(cnt, self.n)
            return out
        rows, counts = np.unique(sub, axis=0, return_counts=True)
        return {frozenset(q[b] for b in np.flatnonzero(r)): Fraction(int(cnt), self.n)
                for r, cnt in zip(rows, counts)}

    def sample(self, query, rng: np.random.Generator) -> frozenset:
        q = _check_query(query, self.m)
        i = int(rng.integers(self.n))
        row = self.approvals[i]
        return frozenset(c for c in q if row[c])

    def exclusive_mass(self, c: int, committee) -> Fraction:
        w = sorted({int(x) for x in committee})
        if c in w:
            return Fraction(0)
        hit = self.approvals[:, c] & ~self.approvals[:, w].any(axis=1)
        return Fraction(int(hit.sum()), self.n)

    def as_population(self) -> "MixturePopulation":
        """Group identical ballots into a mixture with exact weights."""
        dist = self.exact_distribution(range(self.m))
        types = sorted(dist, key=lambda s: (len(s), sorted(s)))
        return MixturePopulation(self.m, types, [dist[s] for s in types])

    def restrict_voters(self, idx) -> "FiniteProfile":
        return FiniteProfile(self.approvals[np.asarray(idx)], self.labels, self.original_index)


def build_finite_profile(ballots: Sequence[Iterable[int]], m: int, labels=None) -> FiniteProfile:
    """Build a profile from explicit approval sets.

    >>> build_finite_profile([{0}, {1, 2}], 3).n
    2
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    if len(ballots) == 0:
        raise ValidationError("empty ballot sequence")
    a = np.zeros((len(ballots), m), dtype=bool)
    for i, b in enumerate(ballots):
        for c in b:
            c = int(c)
            if not 0 <= c < m:
                raise ValidationError(f"ballot {i} approves candidate {c} outside [0, {m})")
            a[i, c] = True
    return FiniteProfile(a, labels=labels)


class MixturePopulation:
    """A finite mixture of ballot types with (preferably rational) weights.

    Weights must be nonnegative and sum to 1: exactly for Fraction weights,
    within 1e-12 for floats.  Duplicate types are merged.
    """

    def __init__(self, m: int, types: Sequence[Iterable[int]], weights: Sequence):
        if m < 1:
            raise ValidationError("m must be >= 1")
        merged: dict[frozenset, object] = {}
        for t, w in zip(types, weights, strict=True):
            s = frozenset(int(c) for c in t)
            if s and (min(s) < 0 or max(s) >= m):
                raise ValidationError(f"ballot type {sorted(s)} outside [0, {m})")
            if w < 0:
                raise ValidationError("mixture weights must be nonnegative")
            if w == 0:
                continue
            merged[s] = merged.get(s, 0) + w
        if not merged:
            raise ValidationError("mixture has no positive-weight ballot type")
        total = sum(merged.values())
        exact = all(isinstance(w, (Fraction, int)) for w in merged.values())
        if (total != 1) if exact else abs(float(total) - 1.0) > 1e-12:
            raise ValidationError(f"mixture weights sum to {total}, not 1")
        self.m = m
        self.types = tuple(merged)
        self.weights = tuple(merged[s] for s in self.types)
        cum = np.cumsum([float(w) for w in self.weights])
        cum[-1] = 1.0
        self._cum = cum

    def __repr__(self):
        return f"{type(self).__name__}(m={self.m}, types={len(self.types)})"

    def exact_distribution(self, query) -> dict[frozenset, object]:
        q = frozenset(_check_query(query, self.m))
        out: dict[frozenset, object] = {}
        for s, w in zip(self.types, self.weights):
            key = s & q
            out[key] = out.get(key, 0) + w
        return out

    def sample(self, query, rng: np.random.Generator) -> frozenset:
        q = frozenset(_check_query(query, self.m))
        j = int(np.searchsorted(self._cum, rng.random(), side="right"))
        return self.types[min(j, len(self.types) - 1)] & q

    def exclusive_mass(self, c: int, committee):
        w = frozenset(int(x) for x in committee)
        if c in w:
            return Fraction(0)
        return sum((p for s, p in zip(self.types, self.weights) if c in s and not (s & w)),
                   Fraction(0))

    def marginal(self, c: int):
        return sum((p for s, p in zip(self.types, self.weights) if c in s), Fraction(0))

    def materialize(self, n: int) -> FiniteProfile:
        """Round the mixture to ``n`` voters by largest-remainder apportionment.

        Each type first receives ``floor(w * n)`` voters; the leftover seats go
        to the largest fractional remainders, ties to the earlier type.
        """
        if n < 1:
            raise ValidationError("n must be >= 1")
        shares = [as_fraction(w) * n for w in self.weights]
        counts = [math.floor(s) for s in shares]
        left = n - sum(counts)
        order = sorted(range(len(shares)), key=lambda j: (-(shares[j] - counts[j]), j))
        for j in order[:left]:
            counts[j] += 1
        a = np.zeros((n, self.m), dtype=bool)
        row = 0
        for s, cnt in zip(self.types, counts):
            if cnt:
                a[row:row + cnt, sorted(s)] = True
                row += cnt
        return FiniteProfile(a)


@dataclass(frozen=True)
class SubsetDistribution:
    """Probability vector over subsets of ``{1, ..., ell}`` with a distinguished element."""

    ell: int
    entries: Mapping[frozenset, object]
    s_star: int = 1

    def __post_init__(self):
        if self.ell < 1:
            raise ValidationError("ell must be >= 1")
        if not 1 <= self.s_star <= self.ell:
            raise ValidationError("s_star must lie in [1, ell]")
        clean = {}
        for s, w in self.entries.items():
            s = frozenset(int(x) for x in s)
            if s and (min(s) < 1 or max(s) > self.ell):
                raise ValidationError(f"set {sorted(s)} is not a subset of [1, {self.ell}]")
            if w < 0:
                raise ValidationError("weights must be nonnegative")
            if w:
                clean[s] = clean.get(s, 0) + w
        total = sum(clean.values())
        exact = all(isinstance(w, (Fraction, int)) for w in clean.values())
        if (total != 1) if exact else abs(float(total) - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {total}, not 1")
        object.__setattr__(self, "entries", clean)

    def weight(self, s) -> object:
        return self.entries.get(frozenset(s), 0)

    def marginal(self, t) -> object:
        """Mass of the sets containing every element of ``t``."""
        t = frozenset(t)
        return sum((w for s, w in self.entries.items() if t <= s), 0)


def gen_fig1a_distribution(ell: int) -> SubsetDistribution:
    """Half the mass on ``{1}``, half on ``{2, ..., ell}``."""
    if ell < 3:
        raise ValidationError("ell must be >= 3")
    return SubsetDistribution(
        ell,
        {frozenset({1}): Fraction(1, 2), frozenset(range(2, ell + 1)): Fraction(1, 2)},
        s_star=1,
    )


class AdversaryPopulation(MixturePopulation):
    """Party mixture hiding ``ell`` symmetric candidates in each block ``C_i``.

    With ``k = p * k0 + r``, each of the ``p`` parties has weight ``k0/k`` and
    approves subsets of its hidden candidates according to ``x``; each of the
    ``r`` singleton parties has weight ``1/k`` and approves only its own
    candidate in ``D``.
    """

    def __init__(self, x: SubsetDistribution, m: int, k: int, k0: int, seed: int):
        if not 1 <= k0 <= k:
            raise ValidationError("need 1 <= k0 <= k")
        p, r = divmod(k, k0)
        size = (m - r) // p
        if size < x.ell:
            raise ValidationError(
                f"blocks of size floor((m - r)/p) = {size} cannot hold ell = {x.ell} hidden candidates")
        parts = tuple(tuple(range(i * size, (i + 1) * size)) for i in range(p))
        rest = tuple(range(p * size, m))
        if len(rest) < r:
            raise ValidationError("not enough spare candidates for the singleton parties")
        rng = make_rng(seed)
        hidden = tuple(tuple(int(c) for c in rng.choice(part, size=x.ell, replace=False))
                       for part in parts)
        weight_p = Fraction(k0, k)
        types, weights = [], []
        for h in hidden:
            for s, w in x.entries.items():
                types.append(frozenset(h[j - 1] for j in s))
                weights.append(as_fraction(w) * weight_p)
        for j in range(r):
            types.append(frozenset({rest[j]}))
            weights.append(Fraction(1, k))
        super().__init__(m, types, weights)
        self.distribution = x
        self.k, self.k0, self.p, self.r = k, k0, p, r
        self.parts, self.spare, self.hidden = parts, rest, hidden
        self.seed = seed

    @property
    def distinguished(self) -> tuple[int, ...]:
        """The hidden candidates playing the role of ``s*`` in each party."""
        return tuple(h[self.distribution.s_star - 1] for h in self.hidden)

    @property
    def singletons(self) -> tuple[int, ...]:
        return self.spare[: self.r]


def gen_adversary_population(x: SubsetDistribution, m: int, k: int, k0: int,
                             seed: int = 0) -> AdversaryPopulation:
    return AdversaryPopulation(x, m, k, k0, seed)


class ProductPopulation:
    """Independent approvals: ``2/k`` for the special candidate, ``1/(2k)`` otherwise."""

    def __init__(self, m: int, special: int, k: int):
        if k < 4:
            raise ValidationError("k must be >= 4")
        if m <= k:
            raise ValidationError("need m > k")
        if not 0 <= special < m:
            raise ValidationError("special candidate out of range")
        self.m, self.special, self.k = m, special, k
        self.probs = tuple(Fraction(2, k) if c == special else Fraction(1, 2 * k)
                           for c in range(m))

    def __repr__(self):
        return f"ProductPopulation(m={self.m}, special={self.special}, k={self.k})"

    def exact_distribution(self, query) -> dict[frozenset, Fraction]:
        q = _check_query(query, self.m)
        if len(q) > MAX_PRODUCT_QUERY:
            raise ValidationError(f"product distribution over {len(q)} candidates is too large")
        out = {}
        for bits in itertools.product((False, True), repeat=len(q)):
            w = Fraction(1)
            for c, on in zip(q, bits):
                w *= self.probs[c] if on else 1 - self.probs[c]
            out[frozenset(c for c, on in zip(q, bits) if on)] = w
        return out

    def sample(self, query, rng: np.random.Generator) -> frozenset:
        q = _check_query(query, self.m)
        u = rng.random(len(q))
        return frozenset(c for c, x in zip(q, u) if x < float(self.probs[c]))

    def exclusive_mass(self, c: int, committee) -> Fraction:
        w = {int(x) for x in committee}
        if c in w:
            return Fraction(0)
        out = self.probs[c]
        for x in w:
            out *= 1 - self.probs[x]
        return out

    def marginal(self, c: int) -> Fraction:
        return self.probs[c]


def gen_product_population(m: int, special: int, k: int) -> ProductPopulation:
    return ProductPopulation(m, special, k)


def filter_popular(profile: FiniteProfile, threshold=0.6) -> FiniteProfile:
    """Drop candidates approved by strictly more than ``threshold`` of the voters.

    The result keeps ``original_index`` so that filtered candidate ``j`` can be
    traced back to the input's identifier.
    """
    th = as_fraction(threshold)
    if not 0 < th <= 1:
        raise ValidationError(f"threshold must lie in (0, 1], got {threshold}")
    counts = profile.approval_counts()
    keep = [c for c in range(profile.m) if Fraction(int(counts[c]), profile.n) <= th]
    if not keep:
        raise ValidationError("filter removed every candidate")
    labels = [profile.labels[c] for c in keep] if profile.labels is not None else None
    return FiniteProfile(profile.approvals[:, keep], labels=labels,
                         original_index=[profile.original_index[c] for c in keep])
