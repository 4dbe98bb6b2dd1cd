"""Query models, cover planning, per-ballot estimators and the query log.

An *exact* query returns, for every subset ``S`` of the queried set ``Q``,
the mass of voters whose approvals restricted to ``Q`` equal ``S``.  A
*noisy* query returns one randomly drawn voter's approvals restricted to
``Q``.  Voters are drawn with replacement and carry no identity across
queries.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from querycommittee._util import BudgetExceeded, ValidationError, make_rng, sorted_tuple
from querycommittee.scoring import BallotTable


def make_query(candidates: Iterable[int], m: int, t: int | None = None) -> tuple[int, ...]:
    q = sorted_tuple(set(candidates))
    if not q:
        raise ValidationError("query must be nonempty")
    if q[0] < 0 or q[-1] >= m:
        raise ValidationError(f"query {q} has candidates outside [0, {m})")
    if t is not None and len(q) > t:
        raise ValidationError(f"query of size {len(q)} exceeds t={t}")
    return q


@dataclass(frozen=True)
class ExactResponse:
    """Sparse map from observed subsets of ``query`` to their mass."""

    query: tuple[int, ...]
    masses: dict

    def table(self) -> BallotTable:
        return BallotTable.from_distribution(self.masses, self.query)

    def mass(self, s: Iterable[int]) -> Fraction:
        return Fraction(self.masses.get(frozenset(s), 0))


@dataclass(frozen=True)
class BallotResponse:
    query: tuple[int, ...]
    approved: frozenset

    def __post_init__(self):
        if not self.approved <= frozenset(self.query):
            raise ValidationError("response approves candidates outside its query")


def exact_query(pop, query: Iterable[int], t: int | None = None) -> ExactResponse:
    """Mass of every approval pattern on ``query`` (only positive entries)."""
    q = make_query(query, pop.m, t)
    dist = {s: p for s, p in pop.exact_distribution(q).items() if p}
    return ExactResponse(q, dist)


def noisy_query(pop, query: Iterable[int], rng: np.random.Generator,
                t: int | None = None) -> BallotResponse:
    """One voter drawn from ``pop``, observed on ``query``."""
    q = make_query(query, pop.m, t)
    return BallotResponse(q, frozenset(pop.sample(q, rng)))


def cover_size(m: int, k: int, t: int) -> int:
    if t <= k:
        raise ValidationError(f"t={t} must exceed k={k}")
    return math.ceil((m - k) / (t - k))


def plan_cover(m: int, committee: Iterable[int], t: int) -> list[tuple[int, ...]]:
    """Queries of size ``<= t`` that all contain ``W`` and jointly cover ``C``.

    Outside candidates are split in index order into chunks of ``t - k``;
    the last chunk is topped up with the lowest-index outside candidates it
    lacks, so every query has size ``min(t, m)``.

    >>> plan_cover(6, [0], 3)
    [(0, 1, 2), (0, 3, 4), (0, 1, 5)]
    """
    w = sorted_tuple(committee)
    k = len(w)
    n_q = cover_size(m, k, t)
    if t > m:
        raise ValidationError(f"t={t} exceeds m={m}")
    outside = [c for c in range(m) if c not in set(w)]
    width = t - k
    plan = []
    for j in range(n_q):
        chunk = outside[j * width:(j + 1) * width]
        if len(chunk) < width:
            have = set(chunk)
            chunk = chunk + [c for c in outside if c not in have][:width - len(chunk)]
        plan.append(tuple(sorted(set(w) | set(chunk))))
    return plan


def _check_cover(resp: BallotResponse, need: Iterable[int]):
    q = set(resp.query)
    missing = [c for c in need if c not in q]
    if missing:
        raise ValidationError(f"query {resp.query} does not cover {missing}")


def ballot_delta_add(resp: BallotResponse, committee, x: int) -> Fraction:
    """Single-voter unbiased estimate of ``Delta(W, x)``: ``[x in R] / (|R & W| + 1)``."""
    w = sorted_tuple(committee)
    _check_cover(resp, (*w, x))
    if x not in resp.approved:
        return Fraction(0)
    return Fraction(1, len(resp.approved.intersection(w)) + 1)


def ballot_delta_swap(resp: BallotResponse, committee, x: int, y: int) -> Fraction:
    """Single-voter unbiased estimate of ``Delta(W, x, y)`` for ``y`` in ``W``."""
    w = sorted_tuple(committee)
    if y not in w:
        raise ValidationError(f"candidate {y} is not in the committee")
    _check_cover(resp, (*w, x))
    r = resp.approved
    s = len(r.intersection(w))
    if x in r and y not in r:
        return Fraction(1, s + 1)
    if x not in r and y in r:
        return Fraction(-1, s)
    return Fraction(0)


@dataclass(frozen=True)
class LogEntry:
    i: int
    query: tuple[int, ...]
    response: frozenset


class QueryLog:
    """Append-only record of noisy queries, one entry per voter."""

    def __init__(self):
        self._entries: list[LogEntry] = []

    def append(self, query: Sequence[int], response: Iterable[int]) -> int:
        i = len(self._entries)
        self._entries.append(LogEntry(i, tuple(query), frozenset(response)))
        return i

    def __len__(self):
        return len(self._entries)

    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self._entries)

    def __getitem__(self, i) -> LogEntry:
        return self._entries[i]

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"i": e.i, "query": list(e.query), "response": sorted(e.response)}) + "\n"
                       for e in self._entries)

    def write(self, path):
        atomic_write_text(path, self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "QueryLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["i"] != len(log):
                raise ValidationError(f"log index {rec['i']} is not contiguous")
            if not set(rec["response"]) <= set(rec["query"]):
                raise ValidationError(f"entry {rec['i']}: response outside query")
            log.append(rec["query"], rec["response"])
        return log

    @classmethod
    def read(cls, path) -> "QueryLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


def atomic_write_text(path, text: str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- voter sources -------------------------------------------------------------


class IidSampler:
    """Independent draws from a population; query ``i`` uses child stream ``(seed, i)``."""

    def __init__(self, pop, seed: int = 0):
        self.pop = pop
        self.m = pop.m
        self.seed = int(seed)
        self.remaining = None

    def draw(self, index: int, query: Sequence[int], count: int = 1) -> list[BallotResponse]:
        rng = make_rng(self.seed, index)
        return [noisy_query(self.pop, query, rng) for _ in range(count)]


class PermutationSampler:
    """Each voter of a finite profile answers at most once, in seeded random order.

    Models a live deployment where participants arrive one by one.  ``draw``
    returns fewer responses than asked once the profile is exhausted.
    """

    def __init__(self, profile, seed: int = 0):
        self.profile = profile
        self.m = profile.m
        self.seed = int(seed)
        self.order = make_rng(seed).permutation(profile.n)
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self.order) - self.pos

    def draw(self, index: int, query: Sequence[int], count: int = 1) -> list[BallotResponse]:
        q = make_query(query, self.m)
        take = self.order[self.pos:self.pos + count]
        self.pos += len(take)
        rows = self.profile.approvals[np.ix_(take, q)]
        return [BallotResponse(q, frozenset(c for c, a in zip(q, row) if a)) for row in rows]


def require_budget(sampler, count: int):
    if sampler.remaining is not None and sampler.remaining < count:
        raise BudgetExceeded(f"only {sampler.remaining} voters left, {count} requested")
