"""Deviation-score arithmetic.

A fault in some slice of multi-dimensional data moves every descended leaf
away from its forecast by the same relative amount (the ripple effect).  The
deviation score

    d = (f - v) / (f + v)

captures that shared amount in [-1, 1]: positive when the real value dropped
below the forecast, negative when it rose, and identical across all leaves
affected by the same root cause.  The identity survives quotient and product
derived measures, which is what makes searching by score feasible; the test
suite pins that closure property rather than any code path here.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from .data import MeasureSpec


class UndefinedValueError(ArithmeticError):
    """A measure value cannot be computed, e.g. a quotient with zero denominator."""


class MeaninglessPairError(UndefinedValueError):
    """Both real and forecast are zero: the slice carries no data."""


def deviation_score(v: float, f: float) -> float:
    """Deviation of real value ``v`` from forecast ``f``, in [-1, 1].

    Raises
    ------
    ValueError
        if either value is negative.
    MeaninglessPairError
        if ``v == f == 0``.
    """
    if v < 0 or f < 0:
        raise ValueError(f"values must be non-negative, got v={v}, f={f}")
    if v == 0 and f == 0:
        raise MeaninglessPairError("deviation score of an empty slice is undefined")
    return (f - v) / (f + v)


def expected_abnormal_value(f: float, d: float) -> float:
    """Real value a leaf with forecast ``f`` should take under deviation score ``d``.

    Inverse of :func:`deviation_score` in its second argument:
    ``deviation_score(expected_abnormal_value(f, d), f) == d`` whenever defined.
    """
    if not -1.0 <= d <= 1.0:
        raise ValueError(f"deviation score out of range: {d}")
    if d == -1.0:
        # (1 - d) / (1 + d) blows up: no finite value attains score -1 for f > 0
        raise UndefinedValueError("expected value is unbounded at deviation score -1")
    return f * (1.0 - d) / (1.0 + d)


def derived_value(measure: "MeasureSpec", operands: Sequence[float]) -> float:
    """Compose a measure value from its fundamental operand values.

    ``operands`` holds one value for a fundamental measure and two (numerator,
    denominator or the two factors) for quotient/product measures.
    """
    kind = measure.kind
    if kind == "fundamental":
        if len(operands) != 1:
            raise ValueError("fundamental measure takes exactly one operand value")
        return float(operands[0])
    if len(operands) != 2:
        raise ValueError(f"{kind} measure takes exactly two operand values")
    a, b = operands
    if kind == "quotient":
        if b == 0:
            raise UndefinedValueError("quotient measure with zero denominator")
        return a / b
    if kind == "product":
        return a * b
    raise ValueError(f"unknown measure kind: {kind!r}")
