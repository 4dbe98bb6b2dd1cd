"""Shared helpers: exceptions, rational coercion, seeded streams."""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np


class ValidationError(ValueError):
    """Input violates a precondition (bad index, size, parameter order...)."""


class BudgetExceeded(RuntimeError):
    """An enumeration or query budget would be exceeded."""


def as_fraction(value) -> Fraction:
    """Coerce ``value`` to a Fraction without binary-float artefacts.

    Floats go through their shortest repr, so ``0.6`` becomes ``3/5`` rather
    than the nearest dyadic rational.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValidationError(f"non-finite value {value!r}")
        return Fraction(repr(float(value)))
    return Fraction(value)


@lru_cache(maxsize=None)
def lcm_upto(k: int) -> int:
    """lcm(1, ..., k); scaling by it turns every 1/j, j <= k, into an integer."""
    return math.lcm(*range(1, max(k, 1) + 1))


@lru_cache(maxsize=None)
def harmonic(k: int) -> Fraction:
    return sum((Fraction(1, j) for j in range(1, k + 1)), Fraction(0))


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """PCG64 stream for ``seed``, optionally a child stream addressed by ``key``.

    Child streams use SeedSequence spawn keys, so stream ``(seed, i)`` is the
    same whether queries are issued serially or out of order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.PCG64(ss))


def check_alpha(alpha) -> Fraction:
    a = as_fraction(alpha)
    if not 0 < a <= 1:
        raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
    return a


def sorted_tuple(items) -> tuple[int, ...]:
    return tuple(sorted(int(x) for x in items))
