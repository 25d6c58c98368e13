"""Chi-squared quantiles from a regularized lower incomplete gamma function."""

from __future__ import annotations

import math

from ..errors import NumericError, ValidationError

_ITMAX = 10_000
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NumericError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cont_frac(a: float, x: float) -> float:
    """Upper regularized gamma Q(a, x) by the modified Lentz method."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise NumericError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValidationError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValidationError(f"x must be >= 0, got {x}")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(_gamma_series(a, x), 1.0)
    return max(1.0 - _gamma_cont_frac(a, x), 0.0)


def chi2_cdf(x: float, d: int) -> float:
    return gammainc_lower(d / 2.0, x / 2.0) if x > 0 else 0.0


def chi2_inv_cdf(p: float, d: int, tol: float = 1e-10) -> float:
    """Smallest x with CDF(x) = p, found by bisection to |CDF - p| < tol."""
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"probability must be in [0, 1), got {p}")
    if d < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {d}")
    if p == 0.0:
        return 0.0
    # tighter than ``tol`` in either tail, where the CDF is flat or tiny,
    # so the quantile keeps its relative accuracy
    tail = min(p, 1.0 - p)
    tol = min(tol, tol * tail * 1e3) if tail < 1e-3 else tol
    lo, hi = 0.0, max(1.0, float(d))
    while chi2_cdf(hi, d) < p:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f = chi2_cdf(mid, d)
        if abs(f - p) < tol:
            return mid
        if f < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * math.ulp(mid):
            return mid
    return 0.5 * (lo + hi)
