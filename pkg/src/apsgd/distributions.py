"""Scalar distribution functions for intervals and test calibration.

Quantiles are upper-tail throughout: ``normal_quantile(0.025)`` is about
1.96, and ``chi2_quantile(alpha, df)`` satisfies ``Pr(X > q) = alpha``.
"""

from __future__ import annotations

import math

from scipy import special

from .exceptions import DomainError, NumericalError

#: The noncentral chi-square series stops once the unaccounted Poisson
#: mixture mass drops below this.
_SERIES_TAIL = 1e-12

_MAX_SERIES_TERMS = 200_000


def _check_prob(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"probability must lie strictly in (0, 1), got {alpha}")
    return alpha


def _check_df(df: int) -> int:
    if int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df}")
    return int(df)


def normal_cdf(x: float) -> float:
    """Standard normal CDF."""
    return float(special.ndtr(x))


def normal_quantile(alpha: float) -> float:
    """Upper-tail standard normal quantile: ``Pr(Z > result) = alpha``."""
    alpha = _check_prob(alpha)
    return float(-special.ndtri(alpha))


def chi2_cdf(x: float, df: int) -> float:
    """Central chi-square CDF (0.0 for negative ``x``)."""
    df = _check_df(df)
    if x <= 0.0:
        return 0.0
    return float(special.chdtr(df, x))


def chi2_quantile(alpha: float, df: int) -> float:
    """Upper-tail chi-square quantile: ``Pr(X > result) = alpha``."""
    alpha = _check_prob(alpha)
    df = _check_df(df)
    return float(special.chdtri(df, alpha))


def noncentral_chi2_cdf(x: float, df: int, noncentrality: float) -> float:
    """Noncentral chi-square CDF via its Poisson mixture of central CDFs.

    The series ``sum_k Pois(k; nc/2) * F_{df + 2k}(x)`` is truncated once the
    remaining Poisson tail mass falls below 1e-12.
    """
    df = _check_df(df)
    x = float(x)
    nc = float(noncentrality)
    if x < 0.0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if nc < 0.0 or not math.isfinite(nc):
        raise DomainError(f"noncentrality must be finite and nonnegative, got {nc}")
    if x == 0.0:
        return 0.0

    half = 0.5 * nc
    weight = math.exp(-half)
    if weight == 0.0:
        raise NumericalError(
            f"noncentrality {nc} too large for the forward series evaluation"
        )
    total = 0.0
    accounted = 0.0
    k = 0
    while True:
        total += weight * special.chdtr(df + 2 * k, x)
        accounted += weight
        if 1.0 - accounted < _SERIES_TAIL:
            break
        k += 1
        if k > _MAX_SERIES_TERMS:
            raise NumericalError("noncentral chi-square series did not truncate")
        weight *= half / k
    return min(max(float(total), 0.0), 1.0)
