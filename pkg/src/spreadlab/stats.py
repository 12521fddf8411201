"""Descriptive statistics in exact decimal arithmetic."""

from __future__ import annotations

from decimal import Decimal
from typing import Sequence

from .errors import InsufficientDataError


def mean(values: Sequence[Decimal]) -> Decimal:
    if not values:
        raise InsufficientDataError("mean of empty sequence")
    return sum(values, Decimal(0)) / len(values)


def pstdev(values: Sequence[Decimal]) -> Decimal:
    """Population standard deviation."""
    m = mean(values)
    var = sum(((v - m) ** 2 for v in values), Decimal(0)) / len(values)
    return var.sqrt()


def percentile(values: Sequence[Decimal], q: Decimal | int | float) -> Decimal:
    """Percentile ``q`` in [0, 100] with linear interpolation between order stats.

    Matches the default ("linear") method of numpy.percentile.
    """
    if not values:
        raise InsufficientDataError("percentile of empty sequence")
    qd = Decimal(str(q))
    if not 0 <= qd <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {q}")
    ordered = sorted(values)
    pos = (len(ordered) - 1) * qd / 100
    lo = int(pos)
    frac = pos - lo
    if lo + 1 >= len(ordered) or frac == 0:
        return ordered[lo]
    return ordered[lo] + (ordered[lo + 1] - ordered[lo]) * frac


def median(values: Sequence[Decimal]) -> Decimal:
    return percentile(values, 50)
