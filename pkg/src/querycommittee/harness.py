"""Experiment pipeline for agree/disagree vote matrices.

A vote matrix (one row per participant, one column per comment, cells
``1``, ``-1`` or missing) is imputed into an approval profile, comments
approved by more than a threshold fraction are dropped, and each committee
rule is scored by ``alpha_hat = 1/(k Delta*(W))`` on the filtered profile.

The adaptive engines see participants one at a time in a seeded random
order, each participant answering once, until the budget is spent.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from querycommittee._util import ValidationError, as_fraction, make_rng
from querycommittee.adaptive import EngineConfig, run_alpha_pav, run_noisy_alpha_pav, run_ucb_alpha_pav
from querycommittee.profiles import FiniteProfile, filter_popular
from querycommittee.queries import PermutationSampler, atomic_write_text
from querycommittee.scoring import alpha_hat, av_committee, check_committee

IMPUTATIONS = ("missing_as_disapprove", "global_rate_bernoulli")
ALGORITHMS = ("av", "pav", "noisy", "ucb")
EXPERIMENT_HEADER = ["dataset", "k", "algorithm", "seed", "alpha_hat", "voters_queried"]
CURVE_HEADER = ["dataset", "k", "algorithm", "seed", "j", "fraction"]


@dataclass(frozen=True)
class VoteMatrix:
    """``values[i, j]`` is ``1`` (agree), ``-1`` (disagree) or ``0`` (missing)."""

    values: np.ndarray
    labels: tuple[str, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def describe(self) -> dict:
        v = self.values
        return {"voters": int(v.shape[0]), "comments": int(v.shape[1]),
                "agree": int((v == 1).sum()), "disagree": int((v == -1).sum()),
                "missing": int((v == 0).sum())}


_CELLS = {"1": 1, "-1": -1, "": 0, "0": 0}


def parse_vote_matrix(text: str, source: str = "<text>") -> VoteMatrix:
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise ValidationError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(not h for h in header):
        raise ValidationError(f"{source}: header must list comment ids")
    out = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(f"{source}:{line}: expected {len(header)} cells, got {len(row)}")
        try:
            vals = [_CELLS[c.strip()] for c in row]
        except KeyError as exc:
            raise ValidationError(f"{source}:{line}: unknown cell {exc.args[0]!r}") from None
        if not any(vals):
            raise ValidationError(f"{source}:{line}: voter has no votes")
        out.append(vals)
    if not out:
        raise ValidationError(f"{source}: no voters")
    return VoteMatrix(np.array(out, dtype=np.int8), tuple(header))


def ingest_vote_matrix(path) -> VoteMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_vote_matrix(fh.read(), os.fspath(path))


def write_vote_matrix(matrix: VoteMatrix, path) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(matrix.labels)
    for row in matrix.values:
        w.writerow(["" if v == 0 else int(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def impute(matrix: VoteMatrix, strategy: str = "missing_as_disapprove", seed: int = 0) -> FiniteProfile:
    """Turn a vote matrix into approvals.

    ``missing_as_disapprove`` treats every missing cell as a disapproval.
    ``global_rate_bernoulli`` fills each missing cell of comment ``j`` with
    an independent approval drawn at ``j``'s observed agree rate.
    """
    v = matrix.values
    approve = v == 1
    if strategy == "missing_as_disapprove":
        pass
    elif strategy == "global_rate_bernoulli":
        observed = (v != 0).sum(axis=0)
        rate = np.divide(approve.sum(axis=0), observed, out=np.zeros(v.shape[1]), where=observed > 0)
        draws = make_rng(seed).random(v.shape) < rate
        approve = np.where(v == 0, draws, approve)
    else:
        raise ValidationError(f"unknown imputation {strategy!r}; choose from {IMPUTATIONS}")
    return FiniteProfile(approve, labels=matrix.labels)


def approval_fraction_curve(profile: FiniteProfile, committee) -> list[Fraction]:
    """Entry ``j - 1`` is the fraction of voters approving at least ``j`` members."""
    w = check_committee(committee, profile.m)
    sat = profile.approvals[:, list(w)].sum(axis=1)
    return [Fraction(int((sat >= j).sum()), profile.n) for j in range(1, len(w) + 1)]


def format_alpha(value: float | None) -> str:
    if value is None:
        return ""
    return "inf" if math.isinf(value) else f"{value:.10g}"


@dataclass
class RunManifest:
    """Everything needed to reproduce one experiment run."""

    dataset: str
    dataset_id: str | None = None
    threshold: object = "3/5"
    imputation: str = "missing_as_disapprove"
    imputation_seed: int = 0
    ks: tuple[int, ...] = (5, 7, 10)
    t: int = 20
    alpha: object = 1
    delta: float = 0.1
    ell: int = 6
    theta: float = 0.05
    seeds: tuple[int, ...] = (0,)
    budget: int | None = None
    algorithms: tuple[str, ...] = ALGORITHMS
    out_dir: str = "results"

    def __post_init__(self):
        self.ks = tuple(int(k) for k in self.ks)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.algorithms = tuple(self.algorithms)
        self.threshold = str(as_fraction(self.threshold))
        self.alpha = str(as_fraction(self.alpha))
        if self.dataset_id is None:
            self.dataset_id = os.path.splitext(os.path.basename(self.dataset))[0]
        if self.imputation not in IMPUTATIONS:
            raise ValidationError(f"unknown imputation {self.imputation!r}")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValidationError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if not self.ks or min(self.ks) < 1:
            raise ValidationError("ks must be positive")

    @property
    def paths(self) -> dict[str, str]:
        return {"experiment": os.path.join(self.out_dir, "experiment.csv"),
                "curves": os.path.join(self.out_dir, "curves.csv"),
                "manifest": os.path.join(self.out_dir, "manifest.json")}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ks"], d["seeds"], d["algorithms"] = list(self.ks), list(self.seeds), list(self.algorithms)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown manifest fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Report:
    rows: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    committees: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    profile: FiniteProfile | None = None

    def experiment_csv(self) -> str:
        return _csv(EXPERIMENT_HEADER, self.rows)

    def curves_csv(self) -> str:
        return _csv(CURVE_HEADER, self.curves)


def _csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _engine_config(man: RunManifest, k: int, m: int, n: int, seed: int, initial=None) -> EngineConfig:
    return EngineConfig(k=k, t=max(min(man.t, m), k + 1), alpha=man.alpha, delta=man.delta,
                        ell_override=man.ell, theta_override=man.theta,
                        voter_budget=man.budget if man.budget is not None else n, seed=seed,
                        skip_initial_swap=True, run_to_budget=True, initial=initial)


def prepare_profile(man: RunManifest) -> FiniteProfile:
    matrix = ingest_vote_matrix(man.dataset)
    profile = impute(matrix, man.imputation, man.imputation_seed)
    return filter_popular(profile, as_fraction(man.threshold))


def run_experiment(man: RunManifest, write: bool = True) -> Report:
    """Run every (k, algorithm, seed) cell; failures are recorded, not raised."""
    profile = prepare_profile(man)
    report = Report(profile=profile)
    n, m = profile.n, profile.m
    ds = man.dataset_id

    def record(k, algo, seed, w, voters):
        report.rows.append([ds, k, algo, seed, format_alpha(alpha_hat(profile, w)), voters])
        report.committees.append({"k": k, "algorithm": algo, "seed": seed, "committee": list(w),
                                  "labels": [profile.label(c) for c in w]})
        for j, frac in enumerate(approval_fraction_curve(profile, w), start=1):
            report.curves.append([ds, k, algo, seed, j, f"{float(frac):.10g}"])

    for k in man.ks:
        if k >= m:
            report.errors.append({"k": k, "algorithm": "*", "seed": "",
                                  "error": f"k={k} is not below the {m} remaining comments"})
            continue
        av = av_committee(profile, k)
        cells = [("av", ""), ("pav", "")] + [(a, s) for a in ("noisy", "ucb") for s in man.seeds]
        for algo, seed in cells:
            if algo not in man.algorithms:
                continue
            try:
                if algo == "av":
                    record(k, algo, seed, av, n)
                elif algo == "pav":
                    cfg = EngineConfig(k=k, t=max(min(man.t, m), k + 1), initial=av,
                                       skip_initial_swap=True)
                    res = run_alpha_pav(profile, cfg, until_stable=True)
                    record(k, algo, seed, res.committee, n)
                else:
                    cfg = _engine_config(man, k, m, n, seed)
                    sampler = PermutationSampler(profile, seed)
                    run = run_noisy_alpha_pav if algo == "noisy" else run_ucb_alpha_pav
                    res = run(profile, cfg, sampler=sampler)
                    record(k, algo, seed, res.committee, res.voters_queried)
            except Exception as exc:  # isolate the failing cell, keep the run going
                report.errors.append({"k": k, "algorithm": algo, "seed": seed,
                                      "error": f"{type(exc).__name__}: {exc}"})
    if write:
        os.makedirs(man.out_dir, exist_ok=True)
        paths = man.paths
        atomic_write_text(paths["experiment"], report.experiment_csv())
        atomic_write_text(paths["curves"], report.curves_csv())
        echo = {"manifest": man.to_dict(), "filtered": {"voters": n, "comments": m,
                                                          "kept": [profile.label(c) for c in range(m)]},
                "committees": report.committees, "errors": report.errors}
        atomic_write_text(paths["manifest"], json.dumps(echo, sort_keys=True, indent=1) + "\n")
    return report
