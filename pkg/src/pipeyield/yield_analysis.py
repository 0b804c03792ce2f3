"""Pipeline delay distribution, parametric yield and per-stage design bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, check_probability
from .gaussian import GaussianMoments, max_reduce, std_normal_cdf, std_normal_quantile
from .variation import PipelineModel, stage_correlation_matrix, stage_distribution

__all__ = [
    "DesignSpacePoint",
    "DesignSpaceRow",
    "YieldQuery",
    "classify_point",
    "design_space_region",
    "mean_lower_bound",
    "pipeline_distribution",
    "relaxed_stage_bound",
    "stage_mean_upper_bound",
    "stage_yield",
    "stringent_stage_bound",
    "yield_gaussian",
    "yield_independent",
]


@dataclass(frozen=True)
class YieldQuery:
    target_delay: float
    target_yield: float

    def __post_init__(self):
        if not (math.isfinite(self.target_delay) and self.target_delay > 0):
            raise DomainError(f"target delay must be > 0, got {self.target_delay!r}")
        check_probability(self.target_yield, "target_yield")

    @property
    def quantile(self):
        return std_normal_quantile(self.target_yield)


@dataclass(frozen=True)
class DesignSpacePoint:
    mu: float
    sigma: float
    feasible_relaxed: bool
    feasible_stringent: bool
    realizable: bool


@dataclass(frozen=True)
class DesignSpaceRow:
    """Boundary means at one sigma: relaxed, stringent, and the realizable band."""

    sigma: float
    mu_relaxed: float
    mu_stringent: float
    mu_realizable_min: float
    mu_realizable_max: float


def pipeline_distribution(p: PipelineModel) -> GaussianMoments:
    dists = [stage_distribution(s, p.variation) for s in p.stages]
    corr = stage_correlation_matrix(p, dists)
    return max_reduce([d.moments for d in dists], corr)


def stage_yield(m: GaussianMoments, target) -> float:
    """P(stage delay < target); a deterministic stage is a step function."""
    if m.std_dev == 0.0:
        return 1.0 if m.mean < target else 0.0
    return std_normal_cdf((target - m.mean) / m.std_dev)


def yield_independent(stages, target) -> float:
    """Product of per-stage yields, exact when stages are independent."""
    stages = list(stages)
    if not stages:
        raise DomainError("need at least one stage")
    out = 1.0
    for m in stages:
        out *= stage_yield(m, target)
    return out


def yield_gaussian(dist: GaussianMoments, target) -> float:
    """Yield when the pipeline delay itself is taken as Gaussian."""
    return stage_yield(dist, target)


def mean_lower_bound(stages) -> float:
    """Jensen: E[max] >= max of the means."""
    stages = list(stages)
    if not stages:
        raise DomainError("need at least one stage")
    return max(m.mean for m in stages)


def stage_mean_upper_bound(q: YieldQuery, sigma_T) -> float:
    return q.target_delay - sigma_T * q.quantile


def relaxed_stage_bound(m: GaussianMoments, q: YieldQuery) -> bool:
    return m.mean + m.std_dev * q.quantile <= q.target_delay


def _stringent_quantile(q: YieldQuery, n_stages):
    if n_stages < 1:
        raise DomainError("number of stages must be >= 1")
    if n_stages == 1:
        return q.quantile
    return std_normal_quantile(q.target_yield ** (1.0 / n_stages))


def stringent_stage_bound(m: GaussianMoments, q: YieldQuery, n_stages) -> bool:
    return m.mean + m.std_dev * _stringent_quantile(q, n_stages) <= q.target_delay


def _chain_coefficients(chain):
    mu_min, sigma_min, mu_max, sigma_max = (float(v) for v in chain)
    if sigma_min <= 0 or sigma_max <= 0:
        raise DomainError("realizable curves need sigma_min > 0 and sigma_max > 0")
    c_min = mu_min / sigma_min ** 2
    c_max = mu_max / sigma_max ** 2
    return min(c_min, c_max), max(c_min, c_max)


def design_space_region(q: YieldQuery, n_stages, chain, sigma_grid):
    """Sampled boundary curves of the permissible (mu, sigma) region.

    ``chain`` is ``(mu_min, sigma_min, mu_max, sigma_max)`` of the smallest
    and largest gate; along a chain of identical gates ``mu = (mu/sigma**2) sigma**2``.
    """
    grid = np.asarray(list(sigma_grid), dtype=float)
    if grid.size == 0:
        raise DomainError("sigma grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("sigma grid must be strictly increasing")
    lo, hi = _chain_coefficients(chain)
    k_relaxed = q.quantile
    k_stringent = _stringent_quantile(q, n_stages)
    return [
        DesignSpaceRow(
            float(s),
            q.target_delay - s * k_relaxed,
            q.target_delay - s * k_stringent,
            lo * s * s,
            hi * s * s,
        )
        for s in grid
    ]


def classify_point(mu, sigma, q: YieldQuery, n_stages, chain) -> DesignSpacePoint:
    lo, hi = _chain_coefficients(chain)
    m = GaussianMoments(mu, sigma)
    return DesignSpacePoint(
        mu,
        sigma,
        relaxed_stage_bound(m, q),
        stringent_stage_bound(m, q, n_stages),
        lo * sigma * sigma <= mu <= hi * sigma * sigma,
    )
