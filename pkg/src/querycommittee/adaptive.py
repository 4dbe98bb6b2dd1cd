"""Adaptive committee selection: alpha-PAV, noisy-alpha-PAV and ucb-alpha-PAV.

All three engines run a local search on the PAV score.  Each round adds the
outside candidate ``c'`` with the largest (estimated) marginal gain and
removes the member ``c`` whose replacement by ``c'`` gains most, stopping
once the gain of ``c'`` drops below ``1/(alpha k)``.  That stopping rule is
a certificate: ``Delta*(W) < 1/(alpha k)`` implies alpha-EJR and alpha-OAS.

* ``run_alpha_pav`` uses exact queries covering ``C`` in each round.
* ``run_noisy_alpha_pav`` asks every covering query to ``ell`` fresh voters.
* ``run_ucb_alpha_pav`` asks one voter per step, keeps every response for
  the whole run and acts on confidence bounds stratified by how much of the
  current committee each logged query covered.

Logarithms are natural throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from querycommittee._util import (
    BudgetExceeded,
    ValidationError,
    check_alpha,
    harmonic,
    lcm_upto,
    make_rng,
    sorted_tuple,
)
from querycommittee.queries import (
    BallotResponse,
    IidSampler,
    QueryLog,
    cover_size,
    exact_query,
    plan_cover,
)
from querycommittee.scoring import BallotTable, alpha_hat, check_committee

# spawn key for the initial committee draw; query streams use ``(i,)``
_INIT_KEY = (0, 0)
DEFAULT_MAX_ROUNDS = 10_000


@dataclass
class EngineConfig:
    """Parameters shared by the adaptive engines.

    ``ell_override`` replaces the theorem sample size, ``theta_override``
    replaces the whole numerator of the UCB confidence radius and
    ``voter_budget`` caps the number of voters queried.  ``run_to_budget``
    (harness mode) keeps querying until the budget is spent: the noisy engine
    only swaps on a positive estimated gain and the UCB engine never returns
    early.
    """

    k: int
    t: int
    alpha: object = 1
    delta: float = 0.1
    ell_override: int | None = None
    theta_override: float | None = None
    voter_budget: int | None = None
    seed: int = 0
    skip_initial_swap: bool = False
    run_to_budget: bool = False
    initial: tuple[int, ...] | None = None
    max_rounds: int = DEFAULT_MAX_ROUNDS
    exact_replay: bool = False

    def __post_init__(self):
        self.alpha = check_alpha(self.alpha)
        if self.k < 1:
            raise ValidationError(f"k={self.k} must be positive")
        if self.t <= self.k:
            raise ValidationError(f"t={self.t} must exceed k={self.k}")
        if not 0 < self.delta < 1:
            raise ValidationError(f"delta={self.delta} must lie in (0, 1)")
        if self.ell_override is not None and self.ell_override < 1:
            raise ValidationError("ell_override must be a positive integer")
        if self.theta_override is not None and not self.theta_override > 0:
            raise ValidationError("theta_override must be positive")
        if self.voter_budget is not None and self.voter_budget < 0:
            raise ValidationError("voter_budget must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = str(self.alpha)
        d["initial"] = list(self.initial) if self.initial is not None else None
        return d


@dataclass
class RunResult:
    algorithm: str
    committee: tuple[int, ...]
    swaps: int
    queries_issued: int
    voters_queried: int
    final_gamma: float
    terminated: bool
    budget_exhausted: bool = False
    certificate: float | None = None
    constants: dict = field(default_factory=dict)
    swap_trace: list = field(default_factory=list)
    config: EngineConfig | None = None
    query_log: QueryLog = field(default_factory=QueryLog, repr=False)
    query_log_path: str | None = None

    def to_dict(self) -> dict:
        def num(v):
            if v is None:
                return None
            v = float(v)
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "algorithm": self.algorithm,
            "committee": list(self.committee),
            "swaps": self.swaps,
            "queries_issued": self.queries_issued,
            "voters_queried": self.voters_queried,
            "final_gamma": num(self.final_gamma),
            "terminated": self.terminated,
            "budget_exhausted": self.budget_exhausted,
            "certificate": num(self.certificate),
            "constants": {k: num(v) if isinstance(v, float) else v for k, v in self.constants.items()},
            "swap_trace": [[i, o, n, num(g)] for i, o, n, g in self.swap_trace],
            "config": self.config.to_dict() if self.config else None,
            "query_log_path": self.query_log_path,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# -- constants -------------------------------------------------------------------


def swap_ratio(alpha, k: int) -> Fraction:
    """``alpha k^2 / ((1 - alpha) k + 1)``; its inverse is the guaranteed gain per swap."""
    a = check_alpha(alpha)
    return a * k * k / ((1 - a) * k + 1)


def theorem_ell(alpha, k: int, m: int, delta: float) -> int:
    """Voters per covering query for the noisy engine.

    >>> theorem_ell(1, 5, 100, 0.05)
    2901258
    """
    if k < 1 or m < 1 or not 0 < delta:
        raise ValidationError("k, m and delta must be positive")
    r = swap_ratio(alpha, k)
    return math.ceil(288 * float(r * r) * math.log(8 * m * k**4 / delta))


def ucb_log_term(k: int, m: int, delta: float) -> float:
    """``log(4608 k^8 m^(k+2) / delta)`` evaluated in log space."""
    return math.log(4608) + 8 * math.log(k) + (k + 2) * math.log(m) - math.log(delta)


def ucb_constants(alpha, k: int, m: int, t: int, delta: float) -> tuple[int, int]:
    """Per-committee sample target ``ell`` and overall voter budget ``L``."""
    if t <= k:
        raise ValidationError(f"t={t} must exceed k={k}")
    r = swap_ratio(alpha, k)
    ell = math.ceil(576 * float(r * r) * ucb_log_term(k, m, delta))
    big_l = math.ceil(2 * float(harmonic(k)) * cover_size(m, k, t) * float(r) * ell)
    return ell, big_l


def ucb_numerator(k: int, m: int, big_l: int, delta: float) -> float:
    """``2 log(4 L (k+1) m^(k+1) / delta)``."""
    return 2 * (math.log(4) + math.log(big_l) + math.log(k + 1) + (k + 1) * math.log(m)
                - math.log(delta))


# -- shared helpers ---------------------------------------------------------------


def _initial(cfg: EngineConfig, m: int) -> list[int]:
    if cfg.initial is not None:
        return list(check_committee(cfg.initial, m, cfg.k))
    rng = make_rng(cfg.seed, *_INIT_KEY)
    return sorted(int(c) for c in rng.choice(m, size=cfg.k, replace=False))


def _effective_t(cfg: EngineConfig, m: int) -> int:
    if cfg.k >= m:
        raise ValidationError(f"k={cfg.k} must be smaller than m={m}")
    return min(cfg.t, m)


def _certificate(pop, w) -> float | None:
    try:
        return alpha_hat(pop, w)
    except (TypeError, ValidationError, BudgetExceeded, MemoryError):
        return None


def _swap(w: list[int], c_in: int, c_out: int) -> list[int]:
    return sorted((set(w) - {c_out}) | {c_in})


def _best_add(tables: list[BallotTable], w) -> tuple[dict[int, Fraction], int, BallotTable]:
    """Delta(W, x) for each outside ``x``, read off the first table covering it."""
    gains: dict[int, Fraction] = {}
    source: dict[int, BallotTable] = {}
    for tab in tables:
        cands, nums, den = tab.add_numerators(w)
        for c, v in zip(cands, nums):
            if c not in gains:
                gains[c] = Fraction(int(v), den) if den else Fraction(0)
                source[c] = tab
    best = min(gains, key=lambda c: (-gains[c], c))
    return gains, best, source[best]


def _best_remove(tab: BallotTable, w, x: int) -> tuple[int, Fraction]:
    ys, nums, den = tab.swap_numerators(w, x)
    j = int(np.argmax(nums))
    return ys[j], (Fraction(int(nums[j]), den) if den else Fraction(0))


# -- Alg. 1: exact queries ----------------------------------------------------------


def run_alpha_pav(pop, cfg: EngineConfig, until_stable: bool = False) -> RunResult:
    """alpha-PAV with exact queries.

    Each round first performs the pending swap (the very first swap is the
    arbitrary ``c = min W``, ``c' = min C\\W`` unless ``skip_initial_swap``),
    then covers ``C`` with queries containing ``W``.  With ``until_stable``
    the loop instead continues while the best swap for ``c'`` has positive
    gain, which yields a local optimum used as the full-information
    reference (its ``Delta*`` is below ``1/(k+1)``).
    """
    m = pop.m
    t = _effective_t(cfg, m)
    a, k = cfg.alpha, cfg.k
    w = _initial(cfg, m)
    c, c_new = w[0], min(x for x in range(m) if x not in w)
    threshold = 1 / (a * k)
    gamma: Fraction | None = None
    gain = Fraction(0)
    swaps = queries = rounds = 0
    trace = []
    terminated = False
    while True:
        if gamma is not None:
            terminated = gain <= 0 if until_stable else gamma < threshold
            if terminated:
                break
        if rounds >= cfg.max_rounds:
            break
        if not (rounds == 0 and cfg.skip_initial_swap):
            w = _swap(w, c_new, c)
            swaps += 1
            trace.append((rounds, c, c_new, None if gamma is None else float(gamma)))
        plan = plan_cover(m, w, t)
        tables = [exact_query(pop, q, t).table() for q in plan]
        queries += len(plan)
        rounds += 1
        gains, c_new, tab = _best_add(tables, w)
        c, gain = _best_remove(tab, w, c_new)
        gamma = gains[c_new]
    return RunResult(
        algorithm="alpha-pav-reference" if until_stable else "alpha-pav",
        committee=tuple(w), swaps=swaps, queries_issued=queries, voters_queried=0,
        final_gamma=float(gamma), terminated=terminated,
        certificate=_certificate(pop, w),
        constants={"cover": cover_size(m, k, t), "ratio": float(swap_ratio(a, k)), "t": t},
        swap_trace=trace, config=cfg)


# -- Alg. 2: fresh voters per round -----------------------------------------------


def _sampler(pop, cfg, sampler):
    return sampler if sampler is not None else IidSampler(pop, cfg.seed)


def _budget_left(cfg, sampler, used: int) -> int | None:
    caps = []
    if cfg.voter_budget is not None:
        caps.append(cfg.voter_budget - used)
    if sampler.remaining is not None:
        caps.append(sampler.remaining)
    return min(caps) if caps else None


def run_noisy_alpha_pav(pop, cfg: EngineConfig, sampler=None) -> RunResult:
    """noisy-alpha-PAV: every covering query goes to ``ell`` fresh voters.

    Estimates of ``Delta(W, x)`` and ``Delta(W, c', y)`` are sample means of
    the per-voter estimators over the voters of the query covering ``x``
    (resp. ``c'``).  The loop runs while the estimated gain of ``c'`` is at
    least ``1/(alpha k) - ((1 - alpha) k + 1)/(12 alpha k^2)``.  When the
    voter budget cannot pay for a full round the current committee is
    returned with ``budget_exhausted`` set.
    """
    m = pop.m
    t = _effective_t(cfg, m)
    a, k = cfg.alpha, cfg.k
    sampler = _sampler(pop, cfg, sampler)
    ell = cfg.ell_override if cfg.ell_override is not None else theorem_ell(a, k, m, cfg.delta)
    r = swap_ratio(a, k)
    threshold = 1 / (a * k) - 1 / (12 * r)
    w = _initial(cfg, m)
    c, c_new = w[0], min(x for x in range(m) if x not in w)
    log = QueryLog()
    gamma = gain = None
    swaps = queries = rounds = 0
    trace = []
    exhausted = False
    while True:
        if gamma is not None and not cfg.run_to_budget and gamma < threshold:
            break
        if rounds >= cfg.max_rounds:
            break
        plan_len = cover_size(m, k, t)
        left = _budget_left(cfg, sampler, len(log))
        if left is not None and left < plan_len * ell:
            exhausted = True
            break
        do_swap = not (rounds == 0 and cfg.skip_initial_swap)
        if cfg.run_to_budget and gain is not None:
            do_swap = gain > 0
        if do_swap:
            w = _swap(w, c_new, c)
            swaps += 1
            trace.append((rounds, c, c_new, None if gamma is None else float(gamma)))
        tables = []
        for q in plan_cover(m, w, t):
            got = sampler.draw(queries, q, ell)
            queries += 1
            for resp in got:
                log.append(q, resp.approved)
            tables.append(BallotTable.from_ballots([g.approved for g in got], q))
        rounds += 1
        gains, c_new, tab = _best_add(tables, w)
        c, gain = _best_remove(tab, w, c_new)
        gamma = gains[c_new]
    return RunResult(
        algorithm="noisy-alpha-pav", committee=tuple(w), swaps=swaps, queries_issued=queries,
        voters_queried=len(log), final_gamma=float("inf") if gamma is None else float(gamma),
        terminated=(gamma is not None and gamma < threshold and not cfg.run_to_budget),
        budget_exhausted=exhausted, certificate=_certificate(pop, w),
        constants={"ell": ell, "threshold": float(threshold), "t": t}, swap_trace=trace,
        config=cfg, query_log=log)


# -- Alg. 3: confidence bounds over a persistent log ----------------------------------


class UcbState:
    """Stratified statistics of a query log relative to the current committee.

    For every outside ``x`` and ``s in {0, ..., k}``, ``cnt[s, x]`` counts
    logged voters whose query contained ``x`` and at least ``s`` members of
    ``W``; ``tot[s, x]`` sums their add-estimates.  ``pcnt/ptot[s, x, j]``
    do the same for swap-estimates of ``(x, W[j])``.  Sums are integers
    scaled by ``lcm(1..k+1)``, so the state is exact and order independent.
    """

    def __init__(self, m: int, k: int, numerator: float):
        self.m, self.k = m, k
        self.numerator = float(numerator)
        self.scale = lcm_upto(k + 1)
        self._q = np.zeros((64, m), dtype=bool)
        self._r = np.zeros((64, m), dtype=bool)
        self.size = 0
        self.times_queried = np.zeros(m, dtype=np.int64)
        self.w: tuple[int, ...] = ()

    # log storage
    def append(self, query, response):
        if self.size == len(self._q):
            self._q = np.concatenate([self._q, np.zeros_like(self._q)])
            self._r = np.concatenate([self._r, np.zeros_like(self._r)])
        i = self.size
        self._q[i, list(query)] = True
        if response:
            self._r[i, list(response)] = True
        self.size += 1
        self.times_queried[list(query)] += 1
        if self.w:
            self._accumulate(i, i + 1)

    def set_committee(self, committee):
        self.w = sorted_tuple(committee)
        if len(self.w) != self.k:
            raise ValidationError(f"committee must have size {self.k}")
        self.rebuild()

    def rebuild(self):
        k, m = self.k, self.m
        self.cnt = np.zeros((k + 1, m), dtype=np.int64)
        self.tot = np.zeros((k + 1, m), dtype=np.int64)
        self.pcnt = np.zeros((k + 1, m, k), dtype=np.int64)
        self.ptot = np.zeros((k + 1, m, k), dtype=np.int64)
        self._accumulate(0, self.size)

    def _accumulate(self, lo: int, hi: int):
        if hi <= lo:
            return
        k, w, L = self.k, list(self.w), self.scale
        q = self._q[lo:hi].astype(np.int64)
        r = self._r[lo:hi].astype(np.int64)
        qw, rw = q[:, w], r[:, w]
        cov = qw.sum(axis=1)
        sr = rw.sum(axis=1)
        add_val = L // (sr + 1)
        gain_val = L // (sr + (k - cov) + 1)
        loss_val = L // np.maximum(sr, 1)
        y_out = qw * (1 - rw)
        x_out = q * (1 - r)
        for s in range(k + 1):
            mask = (cov >= s).astype(np.int64)
            if not mask.any():
                break
            self.cnt[s] += mask @ q
            self.tot[s] += (mask * add_val) @ r
            if s == 0:
                continue
            self.pcnt[s] += (q * mask[:, None]).T @ qw
            self.ptot[s] += ((r * (mask * gain_val)[:, None]).T @ y_out
                             - (x_out * (mask * loss_val)[:, None]).T @ rw)

    def _err(self, counts: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.sqrt(self.numerator / counts)

    def upper_all(self) -> np.ndarray:
        """``Delta~+(W, x)`` for every candidate (``nan`` on members)."""
        cnt = self.cnt
        with np.errstate(divide="ignore", invalid="ignore"):
            est = np.where(cnt > 0, self.tot / (cnt * self.scale) + self._err(cnt), np.inf)
        out = est.min(axis=0)
        out[list(self.w)] = np.nan
        return out

    def upper(self, x: int) -> float:
        return float(self.upper_all()[x])

    def lower_all(self) -> np.ndarray:
        """``Delta~-(W, x, W[j])`` as an ``(m, k)`` array (``nan`` rows on members)."""
        cnt = self.pcnt[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            est = np.where(cnt > 0, self.ptot[1:] / (cnt * self.scale) - self._err(cnt), -np.inf)
        out = est.max(axis=0)
        out[list(self.w)] = np.nan
        return out

    def lower(self, x: int) -> np.ndarray:
        """``Delta~-(W, x, y)`` for each ``y`` in ``W`` (sorted)."""
        return self.lower_all()[x]

    def covered_with_committee(self) -> np.ndarray:
        """How often each candidate was queried together with all of ``W``."""
        return self.cnt[self.k]

    def snapshot(self) -> tuple:
        return (self.cnt.copy(), self.tot.copy(), self.pcnt.copy(), self.ptot.copy())

    @classmethod
    def from_log(cls, log: QueryLog, m: int, committee, numerator: float) -> "UcbState":
        w = sorted_tuple(committee)
        st = cls(m, len(w), numerator)
        for e in log:
            st.append(e.query, e.response)
        st.set_committee(w)
        return st


@dataclass
class UcbStep:
    """What the observer hook sees at each decision point."""

    iteration: int
    committee: tuple[int, ...]
    state: UcbState
    c_new: int
    upper: float
    action: str  # "return", "swap" or "query"


def run_ucb_alpha_pav(pop, cfg: EngineConfig, sampler=None,
                      on_step: Callable[[UcbStep], None] | None = None) -> RunResult:
    """ucb-alpha-PAV: one voter per step, persistent log, stratified confidence bounds.

    Each step computes the upper bound ``Delta~+`` for every outside
    candidate and returns ``W`` when the best one is below ``1/(alpha k)``.
    Otherwise it swaps when the lower bound on the best swap for ``c'`` is at
    least ``((1 - alpha) k + 1)/(2 alpha k^2)``, and if not it queries one
    voter on ``W`` plus the ``t - k`` candidates with the highest upper bound
    among those seen with ``W`` fewer than ``ell`` times (topped up by the
    least-queried candidates).
    """
    m = pop.m
    t = _effective_t(cfg, m)
    a, k = cfg.alpha, cfg.k
    sampler = _sampler(pop, cfg, sampler)
    ell_thm, big_l = ucb_constants(a, k, m, t, cfg.delta)
    ell = cfg.ell_override if cfg.ell_override is not None else ell_thm
    numerator = (cfg.theta_override if cfg.theta_override is not None
                 else ucb_numerator(k, m, big_l, cfg.delta))
    budget = cfg.voter_budget if cfg.voter_budget is not None else big_l
    stop_at = float(1 / (a * k))
    swap_at = float(1 / (2 * swap_ratio(a, k)))

    w = _initial(cfg, m)
    state = UcbState(m, k, numerator)
    state.set_committee(w)
    log = QueryLog()
    trace = []
    swaps = iteration = 0
    exhausted = terminated = False
    final = math.inf
    while True:
        if cfg.exact_replay:
            state.rebuild()
        upper = state.upper_all()
        outside = np.array([x for x in range(m) if x not in set(w)])
        ub = upper[outside]
        c_new = int(outside[int(np.argmax(ub))])
        final = float(upper[c_new])
        if final < stop_at and not cfg.run_to_budget:
            terminated = True
            if on_step:
                on_step(UcbStep(iteration, tuple(w), state, c_new, final, "return"))
            break
        lower = state.lower(c_new)
        j = int(np.argmax(lower))
        if lower[j] >= swap_at and swaps < cfg.max_rounds:
            if on_step:
                on_step(UcbStep(iteration, tuple(w), state, c_new, final, "swap"))
            c_out = w[j]
            trace.append((iteration, c_out, c_new, final))
            w = _swap(w, c_new, c_out)
            state.set_committee(w)
            swaps += 1
            iteration += 1
            continue
        left = _budget_left(cfg, sampler, len(log))
        left = budget - len(log) if left is None else min(left, budget - len(log))
        if left <= 0:
            exhausted = True
            break
        if on_step:
            on_step(UcbStep(iteration, tuple(w), state, c_new, final, "query"))
        query = _ucb_query(state, w, upper, t, ell)
        got = sampler.draw(len(log), query, 1)
        if not got:
            exhausted = True
            break
        log.append(query, got[0].approved)
        state.append(query, got[0].approved)
        iteration += 1
    return RunResult(
        algorithm="ucb-alpha-pav", committee=tuple(w), swaps=swaps, queries_issued=len(log),
        voters_queried=len(log), final_gamma=final, terminated=terminated,
        budget_exhausted=exhausted, certificate=_certificate(pop, w),
        constants={"ell": ell, "L": big_l, "ell_theorem": ell_thm, "numerator": float(numerator),
                   "t": t},
        swap_trace=trace, config=cfg, query_log=log)


def _ucb_query(state: UcbState, w, upper: np.ndarray, t: int, ell: int) -> tuple[int, ...]:
    members = set(w)
    seen = state.covered_with_committee()
    pool = [x for x in range(state.m) if x not in members and seen[x] < ell]
    pool.sort(key=lambda x: (-upper[x], x))
    chosen = pool[:t - len(w)]
    if len(chosen) < t - len(w):
        have = set(chosen)
        rest = [x for x in range(state.m) if x not in members and x not in have]
        rest.sort(key=lambda x: (state.times_queried[x], x))
        chosen += rest[:t - len(w) - len(chosen)]
    return tuple(sorted(members | set(chosen)))


class LogSampler:
    """Serves recorded responses in order; used to replay a run from its log."""

    def __init__(self, log: QueryLog):
        self.log = log
        self.pos = 0
        self.remaining = None

    def draw(self, index: int, query, count: int = 1):
        out = []
        for _ in range(count):
            if self.pos >= len(self.log):
                break
            e = self.log[self.pos]
            if tuple(e.query) != tuple(query):
                raise ValidationError(f"replay diverged at entry {self.pos}: {query} != {e.query}")
            out.append(BallotResponse(e.query, e.response))
            self.pos += 1
        return out
