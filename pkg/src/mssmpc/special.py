"""Regularized incomplete gamma function and the chi-square distribution.

Series expansion below ``x < a + 1`` and a modified-Lentz continued fraction
above it, both run to machine precision.
"""

from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10000


def _gamma_series(a: float, x: float) -> float:
    # P(a, x) = e^{-x} x^a / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    """Upper regularized gamma ``Q(a, x)`` by continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
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
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(_gamma_series(a, x), 1.0)
    return max(1.0 - _gamma_cf(a, x), 0.0)


def chi2_cdf(x: float, n: int) -> float:
    """CDF of the chi-square distribution with ``n`` degrees of freedom."""
    if n < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {n}")
    if x < 0:
        raise ValueError(f"chi-square argument must be nonnegative, got {x}")
    return gammainc_lower(0.5 * n, 0.5 * x)


def chi2_radius(p: float, n: int, tol: float = 1e-10) -> float:
    """Radius ``r`` with ``chi2_cdf(r**2, n) = p``, by bisection on ``r``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    lo, hi = 0.0, max(1.0, math.sqrt(n))
    while chi2_cdf(hi * hi, n) < p:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid * mid, n) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
