"""File formats: long-form profile CSV with JSON sidecar, distribution JSON.

Profile CSV rows are ``voter,candidate,vote`` with ``vote`` in ``{1, -1}``;
pairs that do not appear count as disapprovals.  The sidecar
``<path>.json`` stores ``{n, m, labels}`` so that voters or candidates with
no approvals survive a round trip.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
from fractions import Fraction

import numpy as np

from querycommittee._util import ValidationError
from querycommittee.profiles import FiniteProfile, SubsetDistribution
from querycommittee.queries import atomic_write_text


def sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def write_profile(profile: FiniteProfile, path) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["voter", "candidate", "vote"])
    for i, c in zip(*np.nonzero(profile.approvals)):
        w.writerow([int(i), int(c), 1])
    atomic_write_text(path, buf.getvalue())
    labels = [profile.label(c) for c in range(profile.m)]
    meta = {"n": profile.n, "m": profile.m, "labels": labels}
    atomic_write_text(sidecar_path(path), json.dumps(meta, sort_keys=True) + "\n")


def read_profile(path, sidecar: str | None = None) -> FiniteProfile:
    sidecar = sidecar or sidecar_path(path)
    meta = None
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as fh:
            meta = json.load(fh)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["voter", "candidate", "vote"]:
            raise ValidationError(f"{path}: header must be voter,candidate,vote")
        for line, rec in enumerate(reader, start=2):
            try:
                i, c, v = int(rec["voter"]), int(rec["candidate"]), int(rec["vote"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{line}: malformed row {rec}") from None
            if v not in (1, -1) or i < 0 or c < 0:
                raise ValidationError(f"{path}:{line}: bad values {rec}")
            rows.append((i, c, v))
    n = meta["n"] if meta else max((r[0] for r in rows), default=-1) + 1
    m = meta["m"] if meta else max((r[1] for r in rows), default=-1) + 1
    if n < 1 or m < 1:
        raise ValidationError(f"{path}: empty profile")
    a = np.zeros((n, m), dtype=bool)
    for i, c, v in rows:
        if i >= n or c >= m:
            raise ValidationError(f"{path}: index ({i}, {c}) outside n={n}, m={m}")
        a[i, c] = v == 1
    labels = meta.get("labels") if meta else None
    return FiniteProfile(a, labels=labels)


def distribution_to_json(x: SubsetDistribution) -> str:
    entries = [{"set": sorted(s), "weight": str(Fraction(w)) if isinstance(w, (int, Fraction)) else w}
               for s, w in sorted(x.entries.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))]
    return json.dumps({"ell": x.ell, "s_star": x.s_star, "entries": entries}, sort_keys=True)


def distribution_from_json(text: str) -> SubsetDistribution:
    d = json.loads(text)
    try:
        entries = {}
        for e in d["entries"]:
            w = e["weight"]
            entries[frozenset(e["set"])] = Fraction(w) if isinstance(w, str) else w
        return SubsetDistribution(int(d["ell"]), entries, int(d.get("s_star", 1)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed distribution JSON: {exc}") from None


def write_distribution(x: SubsetDistribution, path) -> None:
    atomic_write_text(path, distribution_to_json(x) + "\n")


def read_distribution(path) -> SubsetDistribution:
    with open(path, encoding="utf-8") as fh:
        return distribution_from_json(fh.read())


def parse_committee(text: str) -> tuple[int, ...]:
    """Committee given as ``"0,3,5"``, a JSON list or ``{"committee": [...]}``."""
    text = text.strip()
    if text.startswith("[") or text.startswith("{"):
        obj = json.loads(text)
        if isinstance(obj, dict):
            obj = obj.get("committee")
        if not isinstance(obj, list):
            raise ValidationError("committee JSON must be a list or have a 'committee' list")
        return tuple(int(c) for c in obj)
    try:
        return tuple(int(c) for c in text.replace(" ", "").split(",") if c)
    except ValueError:
        raise ValidationError(f"cannot parse committee {text!r}") from None
