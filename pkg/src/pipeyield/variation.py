"""Parametric gate and stage delay model under process variation.

A gate of size ``x`` has mean delay ``p + q/x`` and area
``area_coefficient * x``.  Its standard deviation is a fixed fraction of
the mean, split into an inter-die part (shared by the whole die), a
spatially correlated systematic part (shared by gates at one position) and
an independent random part.  Within a stage the first two add linearly and
the random part adds in quadrature; across stages the systematic part is
attenuated by ``exp(-distance / spatial_corr_length)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ._validation import ModelError, check_correlation
from .gaussian import GaussianMoments

__all__ = [
    "GateDelay",
    "GateInstance",
    "PipelineModel",
    "StageDistribution",
    "StageModel",
    "VariationSpec",
    "gate_delay_moments",
    "inverter_chain_relation",
    "stage_correlation_matrix",
    "stage_distribution",
    "uniform_pipeline",
]

FRACTION_TOL = 1e-9


@dataclass(frozen=True)
class VariationSpec:
    inter_die_fraction: float
    systematic_fraction: float
    random_fraction: float
    total_sigma_ratio: float
    spatial_corr_length: float = 1.0

    def __post_init__(self):
        fractions = (self.inter_die_fraction, self.systematic_fraction, self.random_fraction)
        names = ("inter_die_fraction", "systematic_fraction", "random_fraction")
        for name, f in zip(names, fractions):
            if not (math.isfinite(f) and 0.0 <= f <= 1.0):
                raise ModelError(f"{name} must lie in [0, 1], got {f!r}")
        if abs(sum(fractions) - 1.0) > FRACTION_TOL:
            raise ModelError(
                f"variance fractions must sum to 1 (inter_die_fraction + systematic_fraction"
                f" + random_fraction = {sum(fractions)!r})"
            )
        if not (math.isfinite(self.total_sigma_ratio) and self.total_sigma_ratio >= 0):
            raise ModelError(f"total_sigma_ratio must be >= 0, got {self.total_sigma_ratio!r}")
        if not (math.isfinite(self.spatial_corr_length) and self.spatial_corr_length > 0):
            raise ModelError(f"spatial_corr_length must be > 0, got {self.spatial_corr_length!r}")

    @classmethod
    def random_only(cls, ratio, corr_length=1.0):
        return cls(0.0, 0.0, 1.0, ratio, corr_length)

    @classmethod
    def inter_only(cls, ratio, corr_length=1.0):
        return cls(1.0, 0.0, 0.0, ratio, corr_length)

    @classmethod
    def mixed(cls, ratio, inter=0.5, systematic=0.25, corr_length=1.0):
        return cls(inter, systematic, 1.0 - inter - systematic, ratio, corr_length)

    @property
    def component_scales(self):
        """sqrt of each variance fraction: (inter, systematic, random)."""
        return (math.sqrt(self.inter_die_fraction), math.sqrt(self.systematic_fraction),
                math.sqrt(self.random_fraction))


@dataclass(frozen=True)
class GateInstance:
    p: float
    q: float
    area_coefficient: float = 1.0
    x: float = 1.0
    lower: float = 1.0
    upper: float = 1.0

    def __post_init__(self):
        vals = (self.p, self.q, self.area_coefficient, self.x, self.lower, self.upper)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError("gate parameters must be finite")
        if self.lower <= 0:
            raise ModelError(f"size lower bound must be > 0, got {self.lower!r}")
        if not self.lower <= self.x <= self.upper:
            raise ModelError(f"size {self.x!r} outside [{self.lower!r}, {self.upper!r}]")
        if self.p < 0 or self.q < 0:
            raise ModelError("intrinsic delay p and drive coefficient q must be >= 0")
        if self.area_coefficient <= 0:
            raise ModelError("area_coefficient must be > 0")

    @property
    def mean_delay(self):
        return self.p + self.q / self.x

    @property
    def area(self):
        return self.area_coefficient * self.x

    def resized(self, x):
        return replace(self, x=float(x))


@dataclass(frozen=True)
class StageModel:
    gates: tuple
    latch_overhead: float = 0.0
    position: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not self.gates:
            raise ModelError("a stage needs at least one gate")
        if not (math.isfinite(self.latch_overhead) and self.latch_overhead >= 0):
            raise ModelError(f"latch_overhead must be >= 0, got {self.latch_overhead!r}")
        if not math.isfinite(self.position):
            raise ModelError("stage position must be finite")

    @property
    def logic_depth(self):
        return len(self.gates)

    @property
    def sizes(self):
        return np.array([g.x for g in self.gates])

    @property
    def area(self):
        return float(sum(g.area for g in self.gates))

    def arrays(self):
        """(p, q, area_coefficient, lower, upper) as float arrays."""
        g = self.gates
        return (np.array([x.p for x in g]), np.array([x.q for x in g]),
                np.array([x.area_coefficient for x in g]),
                np.array([x.lower for x in g]), np.array([x.upper for x in g]))

    def with_sizes(self, sizes):
        sizes = np.asarray(sizes, dtype=float)
        if sizes.shape != (len(self.gates),):
            raise ModelError(f"expected {len(self.gates)} sizes, got shape {sizes.shape}")
        gates = tuple(g.resized(min(max(x, g.lower), g.upper)) for g, x in zip(self.gates, sizes))
        return replace(self, gates=gates)


@dataclass(frozen=True)
class PipelineModel:
    stages: tuple
    variation: VariationSpec
    correlation: tuple | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ModelError("a pipeline needs at least one stage")
        if self.correlation is not None:
            c = check_correlation(self.correlation, len(self.stages))
            object.__setattr__(self, "correlation", tuple(tuple(float(v) for v in row) for row in c))

    @property
    def n_stages(self):
        return len(self.stages)

    @property
    def area(self):
        return float(sum(s.area for s in self.stages))

    def with_stage(self, index, stage):
        stages = list(self.stages)
        stages[index] = stage
        return replace(self, stages=tuple(stages))


class GateDelay(NamedTuple):
    mean: float
    sigma_inter: float
    sigma_sys: float
    sigma_rand: float


@dataclass(frozen=True)
class StageDistribution(GaussianMoments):
    sigma_inter: float = 0.0
    sigma_sys: float = 0.0
    sigma_rand: float = 0.0

    @property
    def moments(self):
        return GaussianMoments(self.mean, self.std_dev)


def gate_delay_moments(g: GateInstance, v: VariationSpec) -> GateDelay:
    mean = g.mean_delay
    total = v.total_sigma_ratio * mean
    s_inter, s_sys, s_rand = v.component_scales
    return GateDelay(mean, s_inter * total, s_sys * total, s_rand * total)


def _stage_stats(p, q, x, latch, v):
    """Vectorised core of ``stage_distribution`` for a size vector ``x``."""
    m = p + q / x
    total = m.sum()
    r = v.total_sigma_ratio
    s_inter, s_sys, s_rand = v.component_scales
    sig_inter = s_inter * r * total
    sig_sys = s_sys * r * total
    sig_rand = s_rand * r * math.sqrt(float(np.dot(m, m)))
    std = math.sqrt(sig_inter ** 2 + sig_sys ** 2 + sig_rand ** 2)
    return StageDistribution(latch + float(total), std, float(sig_inter), float(sig_sys), sig_rand)


def stage_distribution(s: StageModel, v: VariationSpec) -> StageDistribution:
    p, q, _, _, _ = s.arrays()
    return _stage_stats(p, q, s.sizes, s.latch_overhead, v)


def _correlation_from(dists, positions, v):
    n = len(dists)
    s_inter = np.array([d.sigma_inter for d in dists])
    s_sys = np.array([d.sigma_sys for d in dists])
    std = np.array([d.std_dev for d in dists])
    pos = np.asarray(positions, dtype=float)
    kernel = np.exp(-np.abs(pos[:, None] - pos[None, :]) / v.spatial_corr_length)
    cov = np.outer(s_inter, s_inter) + kernel * np.outer(s_sys, s_sys)
    denom = np.outer(std, std)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, cov / denom, 0.0)
    c = np.clip(0.5 * (c + c.T), -1.0, 1.0)
    c[np.diag_indices(n)] = 1.0
    return c


def stage_correlation_matrix(p: PipelineModel, dists=None) -> np.ndarray:
    """Inter-stage correlation; an explicit override on the model wins."""
    if p.correlation is not None:
        return np.array(p.correlation, dtype=float)
    if dists is None:
        dists = [stage_distribution(s, p.variation) for s in p.stages]
    return _correlation_from(dists, [s.position for s in p.stages], p.variation)


def inverter_chain_relation(n_levels, mu_min, sigma_min) -> GaussianMoments:
    """Moments of a chain of ``n_levels`` independent identical inverters."""
    if n_levels < 1:
        raise ModelError("logic depth must be >= 1")
    if mu_min <= 0 or sigma_min < 0:
        raise ModelError("need mu_min > 0 and sigma_min >= 0")
    return GaussianMoments(n_levels * mu_min, math.sqrt(n_levels) * sigma_min)


def uniform_pipeline(n_stages, depth, gate: GateInstance, variation: VariationSpec,
                     latch_overhead=0.0, spacing=1.0) -> PipelineModel:
    """``n_stages`` identical stages of ``depth`` copies of ``gate``, ``spacing`` apart."""
    stages = tuple(
        StageModel((gate,) * depth, latch_overhead, i * spacing) for i in range(n_stages)
    )
    return PipelineModel(stages, variation)
