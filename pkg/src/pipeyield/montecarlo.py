"""Monte-Carlo oracle for correlated Gaussian stage delays.

Random numbers come from the Philox4x64 counter-based generator.  The key
is derived from the seed, and sample row ``r`` always owns counter blocks
``[r * B, (r + 1) * B)`` with ``B = ceil(n_stages / 4)``, so each row is a
pure function of ``(seed, r)``.  Batches can therefore be drawn in any
order or in parallel and concatenated by batch index.  Uniforms are mapped
to standard normals by ``std_normal_quantile``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import ModelError, check_correlation
from .gaussian import GaussianMoments, std_normal_quantile
from .variation import PipelineModel, stage_correlation_matrix, stage_distribution
from .yield_analysis import YieldQuery, pipeline_distribution, yield_gaussian

__all__ = [
    "McConfig",
    "McReport",
    "correlation_factor",
    "empirical_max_stats",
    "model_error_report",
    "repair_correlation",
    "sample_correlated",
    "sample_stage_delays",
    "standard_normals",
]

EIGEN_FLOOR = 1e-10
_PIVOT_TOL = 1e-12
_WORDS_PER_BLOCK = 4


@dataclass(frozen=True)
class McConfig:
    samples: int = 100_000
    seed: int = 42
    batch_size: int = 16_384
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1 or self.batch_size < 1 or self.workers < 1:
            raise ValueError("samples, batch_size and workers must all be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class McReport:
    empirical: GaussianMoments
    empirical_yield: float
    analytical: GaussianMoments
    analytical_yield: float
    mean_error_pct: float
    sigma_error_pct: float
    standard_error_mean: float
    samples: int
    seed: int


def _key(seed):
    return np.random.SeedSequence(seed).generate_state(2, np.uint64)


def _normals_rows(key, start, rows, n_vars):
    blocks = -(-n_vars // _WORDS_PER_BLOCK)
    bitgen = np.random.Philox(key=key)
    bitgen.advance(start * blocks)
    raw = bitgen.random_raw(rows * blocks * _WORDS_PER_BLOCK)
    raw = raw.reshape(rows, blocks * _WORDS_PER_BLOCK)[:, :n_vars]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return std_normal_quantile(u)


def _batches(cfg):
    return [(s, min(cfg.batch_size, cfg.samples - s)) for s in range(0, cfg.samples, cfg.batch_size)]


def standard_normals(cfg: McConfig, n_vars, transform=None):
    """(samples x n_vars) iid N(0, 1) draws, optionally mapped batch-wise by ``transform``."""
    key = _key(cfg.seed)

    def work(batch):
        z = _normals_rows(key, batch[0], batch[1], n_vars)
        return transform(z) if transform is not None else z

    batches = _batches(cfg)
    if cfg.workers == 1 or len(batches) == 1:
        parts = [work(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, batches))
    return np.concatenate(parts, axis=0)


def repair_correlation(c):
    """Nearest-PSD fix: clamp eigenvalues to 1e-10, rescale the diagonal to 1."""
    c = np.asarray(c, dtype=float)
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    w = np.maximum(w, EIGEN_FLOOR)
    r = (v * w) @ v.T
    d = np.sqrt(np.diag(r))
    r = r / np.outer(d, d)
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return r


def _semidefinite_cholesky(c):
    """Lower-triangular L with L L^T = c for PSD c; None if a pivot is negative.

    Zero pivots (rank deficiency) zero out their column instead of failing,
    so a rank-one all-ones matrix gives identical rows exactly.
    """
    n = c.shape[0]
    L = np.zeros_like(c)
    for j in range(n):
        d = c[j, j] - np.dot(L[j, :j], L[j, :j])
        if d < -_PIVOT_TOL:
            return None
        if d <= _PIVOT_TOL:
            continue
        L[j, j] = math.sqrt(d)
        L[j + 1:, j] = (c[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def correlation_factor(c):
    """Triangular factor of a correlation matrix, repairing it only when indefinite."""
    c = check_correlation(c)
    L = _semidefinite_cholesky(c)
    if L is None:
        L = _semidefinite_cholesky(repair_correlation(c))
        if L is None:
            raise ModelError("correlation matrix cannot be repaired to positive semidefinite")
    return L


def sample_correlated(means, sigmas, corr, cfg: McConfig):
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    L = correlation_factor(corr)
    scale = L * sigmas[:, None]
    return standard_normals(cfg, len(means), lambda z: means + z @ scale.T)


def sample_stage_delays(p: PipelineModel, cfg: McConfig):
    """One row per simulated die, one column per stage (ps)."""
    dists = [stage_distribution(s, p.variation) for s in p.stages]
    corr = stage_correlation_matrix(p, dists)
    return sample_correlated([d.mean for d in dists], [d.std_dev for d in dists], corr, cfg)


def empirical_max_stats(samples, target):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.size == 0:
        raise ValueError("need a non-empty (samples x stages) matrix")
    worst = samples.max(axis=1)
    std = float(worst.std(ddof=1)) if worst.size > 1 else 0.0
    return GaussianMoments(float(worst.mean()), std), float(np.mean(worst < target))


def _pct(analytical, empirical):
    if empirical == 0.0:
        return 0.0 if analytical == 0.0 else math.inf
    return abs(analytical - empirical) / abs(empirical) * 100.0


def model_error_report(p: PipelineModel, q: YieldQuery, cfg: McConfig) -> McReport:
    analytical = pipeline_distribution(p)
    emp, emp_yield = empirical_max_stats(sample_stage_delays(p, cfg), q.target_delay)
    return McReport(
        empirical=emp,
        empirical_yield=emp_yield,
        analytical=analytical,
        analytical_yield=yield_gaussian(analytical, q.target_delay),
        mean_error_pct=_pct(analytical.mean, emp.mean),
        sigma_error_pct=_pct(analytical.std_dev, emp.std_dev),
        standard_error_mean=emp.std_dev / math.sqrt(cfg.samples),
        samples=cfg.samples,
        seed=cfg.seed,
    )
