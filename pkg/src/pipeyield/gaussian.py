"""Standard normal kernels and Clark's moment matching for the max of Gaussians.

The max of two jointly Gaussian variables is replaced by a Gaussian with
the same first two moments (Clark, 1961).  Folding that pairwise rule over a
list, while carrying the correlation of every remaining variable to the
running result, gives an approximation of the max of ``n`` correlated
Gaussians.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._validation import DomainError, check_correlation, check_finite

__all__ = [
    "ClarkPairResult",
    "ConsistencyWarning",
    "GaussianMoments",
    "clark_corr_propagate",
    "clark_max_pair",
    "max_reduce",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
]

SPREAD_TOL = 1e-12
JENSEN_TOL = 1e-9
CORR_OVERSHOOT_TOL = 1e-6

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ConsistencyWarning(UserWarning):
    """A propagated correlation left [-1, 1] by more than 1e-6 before clamping."""


@dataclass(frozen=True)
class GaussianMoments:
    """Mean and standard deviation of a delay, both in picoseconds."""

    mean: float
    std_dev: float

    def __post_init__(self):
        check_finite(self.mean, "mean")
        check_finite(self.std_dev, "std_dev")
        if self.std_dev < 0:
            raise DomainError(f"std_dev must be >= 0, got {self.std_dev!r}")

    @property
    def variance(self):
        return self.std_dev * self.std_dev

    @property
    def variability(self):
        """Coefficient of variation sigma/mu."""
        return self.std_dev / self.mean


@dataclass(frozen=True)
class ClarkPairResult:
    moments: GaussianMoments
    alpha: float
    spread: float


def std_normal_pdf(x):
    if np.ndim(x) == 0:
        x = float(x)
        return _INV_SQRT_2PI * math.exp(-0.5 * x * x)
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def std_normal_cdf(x):
    """Phi(x) through the complementary error function.

    ``math.erfc`` / ``scipy.special.erfc`` are accurate to a few ulp, so the
    absolute error is far below 1e-10 over the whole real line, including
    the tails where ``0.5 * (1 + erf)`` would cancel.
    """
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    x = np.asarray(x, dtype=float)
    return 0.5 * special.erfc(-x / _SQRT2)


# Acklam's rational approximation of the normal quantile, relative error
# below 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p):
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den

    for mask, tail, sign in ((lo, p[lo], 1.0), (hi, 1.0 - p[hi], -1.0)):
        q = np.sqrt(-2.0 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[mask] = sign * num / den
    return x


def std_normal_quantile(p):
    """Inverse of ``std_normal_cdf``.

    Acklam's approximation followed by one Halley step against the erfc
    based cdf; the residual ``|cdf(x) - p|`` is at rounding level.  Raises
    ``DomainError`` unless every ``p`` lies strictly inside (0, 1).
    """
    scalar = np.ndim(p) == 0
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError("quantile requires 0 < p < 1")
    x = _acklam(p)
    # Work on the lower tail of whichever side x lies, so the residual is
    # computed without cancellation.
    upper = x > 0
    tail_p = np.where(upper, 1.0 - p, p)
    tail_x = np.where(upper, -x, x)
    e = 0.5 * special.erfc(-tail_x / _SQRT2) - tail_p
    u = e * _SQRT_2PI * np.exp(0.5 * tail_x * tail_x)
    tail_x = tail_x - u / (1.0 + 0.5 * tail_x * u)
    x = np.where(upper, -tail_x, tail_x)
    return float(x[0]) if scalar else x


def clark_max_pair(a: GaussianMoments, b: GaussianMoments, rho: float) -> ClarkPairResult:
    """Moment-matched Gaussian for ``max(A, B)``.

    ``alpha = (mu_b - mu_a) / spread`` with
    ``spread**2 = sigma_a**2 + sigma_b**2 - 2 sigma_a sigma_b rho``.  The
    second moment is formed on means centred at their midpoint, which is
    algebraically identical and avoids cancellation in ``m2 - m1**2``.
    """
    rho = float(rho)
    if not abs(rho) <= 1.0 + 1e-12:
        raise DomainError(f"correlation must lie in [-1, 1], got {rho!r}")
    rho = min(1.0, max(-1.0, rho))
    sa, sb = a.std_dev, b.std_dev
    spread2 = sa * sa + sb * sb - 2.0 * sa * sb * rho
    spread = math.sqrt(spread2) if spread2 > 0.0 else 0.0

    if spread < SPREAD_TOL:
        if b.mean > a.mean:
            return ClarkPairResult(b, math.inf, 0.0)
        if a.mean > b.mean:
            return ClarkPairResult(a, -math.inf, 0.0)
        return ClarkPairResult(a, 0.0, 0.0)

    centre = 0.5 * (a.mean + b.mean)
    ma, mb = a.mean - centre, b.mean - centre
    alpha = (b.mean - a.mean) / spread
    cdf_pos = std_normal_cdf(alpha)
    cdf_neg = std_normal_cdf(-alpha)
    dens = std_normal_pdf(alpha)

    m1 = mb * cdf_pos + ma * cdf_neg + spread * dens
    m2 = (mb * mb + sb * sb) * cdf_pos + (ma * ma + sa * sa) * cdf_neg + (ma + mb) * spread * dens
    var = m2 - m1 * m1
    std = math.sqrt(var) if var > 0.0 else 0.0
    return ClarkPairResult(GaussianMoments(m1 + centre, std), alpha, spread)


def clark_corr_propagate(sigma_k, rho_k_a, rho_k_b, pair: ClarkPairResult, sigma_a, sigma_b):
    """Correlation of a third variable K with the Gaussian standing in for max(A, B).

    Clark's result ``(sigma_a rho_ka Phi(-alpha) + sigma_b rho_kb Phi(alpha)) / sigma_max``.
    ``rho_k_a`` and ``rho_k_b`` may be arrays (one entry per remaining
    variable); the result is clamped to [-1, 1] and a ``ConsistencyWarning``
    is raised when clamping moves it by more than 1e-6.
    """
    rho_k_a = np.asarray(rho_k_a, dtype=float)
    rho_k_b = np.asarray(rho_k_b, dtype=float)
    scalar = rho_k_a.ndim == 0 and rho_k_b.ndim == 0
    sigma_k = np.asarray(sigma_k, dtype=float)

    s_max = pair.moments.std_dev
    if s_max < SPREAD_TOL:
        if pair.alpha < 0:
            out = rho_k_a
        elif pair.alpha > 0:
            out = rho_k_b
        else:
            out = rho_k_a
        out = np.broadcast_to(out, np.broadcast(rho_k_a, rho_k_b).shape).copy()
    else:
        out = (sigma_b * rho_k_b * std_normal_cdf(pair.alpha)
               + sigma_a * rho_k_a * std_normal_cdf(-pair.alpha)) / s_max
        out = np.asarray(out, dtype=float)
    # A variable with no spread is uncorrelated with everything.
    out = np.where(sigma_k == 0.0, 0.0, out)

    if np.any(np.abs(out) > 1.0 + CORR_OVERSHOOT_TOL):
        warnings.warn(
            f"propagated correlation {float(np.max(np.abs(out))):.9f} outside [-1, 1]; clamped",
            ConsistencyWarning,
            stacklevel=2,
        )
    out = np.clip(out, -1.0, 1.0)
    return float(out) if scalar else out


def fold_order(stages):
    """Indices sorted by increasing mean, then decreasing std_dev, then position."""
    return sorted(range(len(stages)), key=lambda i: (stages[i].mean, -stages[i].std_dev, i))


def max_reduce(stages, corr) -> GaussianMoments:
    """Clark approximation of ``max(stages)`` for correlated Gaussian stages."""
    stages = list(stages)
    if not stages:
        raise DomainError("max_reduce needs at least one variable")
    n = len(stages)
    c = check_correlation(corr, n)
    order = fold_order(stages)
    sigmas = np.array([s.std_dev for s in stages])

    first = order[0]
    acc = stages[first]
    rho_acc = c[first].copy()
    for pos in range(1, n):
        j = order[pos]
        pair = clark_max_pair(acc, stages[j], rho_acc[j])
        rest = np.asarray(order[pos + 1:], dtype=int)
        if rest.size:
            rho_acc[rest] = clark_corr_propagate(
                sigmas[rest], rho_acc[rest], c[j, rest], pair, acc.std_dev, stages[j].std_dev
            )
        acc = pair.moments
    return acc
