"""Precision defaults, radius grids and float serialization.

Radii are handled through ``log r`` everywhere.  A grid is simply a tuple of
``mpf`` values of ``log r`` in increasing order; ``mpf`` carries an unbounded
exponent, so ``exp(log_r)`` stays representable even for doubly exponential
radii such as ``exp(exp(400))``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import mpmath
from mpmath import mp, mpf

DEFAULT_PREC = 256
DEFAULT_TEXT_DIGITS = 30

# geometric default grid: r = R0 * 1.25**k, k < 200
DEFAULT_GRID_RATIO = 1.25
DEFAULT_GRID_POINTS = 200


def to_mpf(x) -> mpf:
    if isinstance(x, str):
        return mpf(x)
    return mpf(x)


def geometric_grid(R0=mpmath.e, ratio=DEFAULT_GRID_RATIO, points=DEFAULT_GRID_POINTS):
    """``log r`` values of the geometric grid ``r_k = R0 * ratio**k``."""
    if points < 2 or ratio <= 1:
        raise ValueError("geometric grid needs points >= 2 and ratio > 1")
    base = mpmath.log(mpf(R0))
    step = mpmath.log(mpf(ratio))
    return tuple(base + k * step for k in range(points))


def linear_log_grid(log_r_lo, log_r_hi, points):
    """``log r`` equally spaced between the two endpoints (inclusive)."""
    lo, hi = mpf(log_r_lo), mpf(log_r_hi)
    if points < 2 or hi <= lo:
        raise ValueError("linear grid needs points >= 2 and hi > lo")
    return tuple(lo + (hi - lo) * k / (points - 1) for k in range(points))


def log_geometric_grid(log_r_lo, log_r_hi, points):
    """``log r`` geometrically spaced, i.e. ``log log r`` equally spaced."""
    lo, hi = mpf(log_r_lo), mpf(log_r_hi)
    if lo <= 0 or hi <= lo:
        raise ValueError("log-geometric grid needs 0 < lo < hi")
    return tuple(mpmath.exp(t) for t in linear_log_grid(mpmath.log(lo), mpmath.log(hi), points))


def iterated_grid(loglog_lo, loglog_hi, points):
    """``log r = exp(t)`` with ``t = log log r`` equally spaced.

    Needed wherever a quantity converges like ``1/log log r`` (e.g. the growth
    parameters of ``phi = log r``).
    """
    lo, hi = mpf(loglog_lo), mpf(loglog_hi)
    return tuple(mpmath.exp(t) for t in linear_log_grid(lo, hi, points))


def decades_spanned(grid: Sequence, R0) -> mpf:
    return (mpf(grid[-1]) - mpmath.log(mpf(R0))) / mpmath.log(10)


def tail_half(seq: Sequence):
    n = len(seq)
    return seq[n // 2:]


def spread(values: Iterable) -> mpf:
    """Spread of a sequence relative to ``max(1, |last|)``.

    Used as the "limit exists" predicate: near-zero limits are judged on an
    absolute scale, large ones on a relative scale.
    """
    vals = [mpf(v) for v in values]
    if not vals:
        return mpf("inf")
    if any(mpmath.isinf(v) or mpmath.isnan(v) for v in vals):
        return mpf("inf")
    return (max(vals) - min(vals)) / max(mpf(1), abs(vals[-1]))


def _settling(values: Sequence, trend_cap=0.05) -> bool:
    """Monotone tail whose variation shrinks from quarter to quarter.

    Catches sequences converging like ``1/log log r`` that cannot reach a
    small absolute spread on any grid of practical size.
    """
    vals = [mpf(v) for v in values]
    n = len(vals)
    if n < 8 or spread(vals) > trend_cap:
        return False
    d = [b - a for a, b in zip(vals, vals[1:])]
    if not (all(x >= 0 for x in d) or all(x <= 0 for x in d)):
        return False
    q = n // 4
    early = abs(vals[-q - 1] - vals[-2 * q - 1])
    late = abs(vals[-1] - vals[-q - 1])
    return late <= 0.75 * early


def limit_if_exists(values: Sequence, threshold=1e-3):
    """Last value when the sequence is settled to ``threshold`` or visibly
    converging (see ``_settling``), else None."""
    if spread(values) < threshold or _settling(values):
        return mpf(values[-1])
    return None


def log_plus(x):
    return x if x > 0 else mpf(0)


def fmt(x, digits: int = DEFAULT_TEXT_DIGITS) -> str:
    """Deterministic ``<mantissa>e<exponent>`` text for a real number."""
    mantissa, exponent = decimal_pair(x, digits)
    if mantissa in ("inf", "-inf", "nan"):
        return mantissa
    return f"{mantissa}e{exponent}"


def decimal_pair(x, digits: int = DEFAULT_TEXT_DIGITS):
    """Split ``x`` into a (decimal mantissa string, decimal exponent) pair."""
    x = mpf(x)
    if mpmath.isnan(x):
        return "nan", 0
    if mpmath.isinf(x):
        return ("inf" if x > 0 else "-inf"), 0
    if x == 0:
        return "0." + "0" * (digits - 1), 0
    with mp.workprec(max(mp.prec, int(digits * 3.33) + 32)):
        e = int(mpmath.floor(mpmath.log10(abs(x))))
        m = x / mpmath.power(10, e)
        text = mpmath.nstr(m, digits, strip_zeros=False, min_fixed=-1, max_fixed=2)
        if text.lstrip("-").startswith("10"):
            e += 1
            m = x / mpmath.power(10, e)
            text = mpmath.nstr(m, digits, strip_zeros=False, min_fixed=-1, max_fixed=2)
    return text, e


def parse_decimal(text) -> mpf:
    if isinstance(text, (list, tuple)):
        mantissa, exponent = text
        return mpf(mantissa) * mpmath.power(10, int(exponent))
    return mpf(text)
