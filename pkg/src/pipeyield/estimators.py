"""scikit-learn style wrappers around the analysis, sampling and sizing routines.

Inputs are pipelines rather than feature matrices, so these objects follow the
fit/predict/transform and get_params conventions without aiming for full
estimator-check compliance.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, check_correlation, check_moments_array
from .gaussian import GaussianMoments, max_reduce
from .montecarlo import McConfig, sample_correlated, sample_stage_delays
from .optimizer import MODES, balanced_baseline, global_optimize
from .variation import PipelineModel, stage_correlation_matrix, stage_distribution
from .yield_analysis import YieldQuery, stage_yield, yield_independent


def _stages_and_corr(X, correlation):
    """Per-stage moments and correlation from a pipeline or an (n, 2) array."""
    if isinstance(X, PipelineModel):
        dists = [stage_distribution(s, X.variation) for s in X.stages]
        return [d.moments for d in dists], stage_correlation_matrix(X, dists)
    arr = check_moments_array(X)
    n = arr.shape[0]
    corr = np.eye(n) if correlation is None else check_correlation(correlation, n)
    return [GaussianMoments(float(m), float(s)) for m, s in arr], corr


def _targets(T):
    t = np.atleast_1d(np.asarray(T, dtype=float))
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise DomainError("targets must be a 1-d array of finite delays")
    return t


class PipelineDelayEstimator(BaseEstimator):
    """Analytical pipeline delay; ``predict`` maps target delays to yields.

    method: "gaussian" treats the max as normal, "independent" multiplies stage yields.
    """

    def __init__(self, correlation=None, method="gaussian"):
        self.correlation = correlation
        self.method = method

    def fit(self, X, y=None):
        if self.method not in ("gaussian", "independent"):
            raise ValueError(f"unknown method {self.method!r}")
        self.stage_moments_, self.correlation_ = _stages_and_corr(X, self.correlation)
        self.distribution_ = max_reduce(self.stage_moments_, self.correlation_)
        self.n_stages_ = len(self.stage_moments_)
        return self

    def predict(self, T):
        check_is_fitted(self, "distribution_")
        t = _targets(T)
        if self.method == "independent":
            return np.array([yield_independent(self.stage_moments_, v) for v in t])
        return np.array([stage_yield(self.distribution_, v) for v in t])


class MonteCarloPipelineEstimator(BaseEstimator):
    def __init__(self, correlation=None, samples=100_000, seed=42, batch_size=16_384, workers=1):
        self.correlation = correlation
        self.samples = samples
        self.seed = seed
        self.batch_size = batch_size
        self.workers = workers

    def fit(self, X, y=None):
        cfg = McConfig(self.samples, self.seed, self.batch_size, self.workers)
        if isinstance(X, PipelineModel):
            draws = sample_stage_delays(X, cfg)
        else:
            stages, corr = _stages_and_corr(X, self.correlation)
            draws = sample_correlated([m.mean for m in stages], [m.std_dev for m in stages],
                                      corr, cfg)
        self.max_delay_ = draws.max(axis=1)
        self.distribution_ = GaussianMoments(float(self.max_delay_.mean()),
                                             float(self.max_delay_.std(ddof=1)))
        return self

    def predict(self, T):
        check_is_fitted(self, "max_delay_")
        t = _targets(T)
        return (self.max_delay_[None, :] < t[:, None]).mean(axis=1)


class PipelineSizer(TransformerMixin, BaseEstimator):
    """Sizes a pipeline for a delay/yield target; ``transform`` returns the sized model."""

    def __init__(self, target_delay=100.0, target_yield=0.8, mode="min-area", max_iter=50):
        self.target_delay = target_delay
        self.target_yield = target_yield
        self.mode = mode
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if not isinstance(X, PipelineModel):
            raise TypeError("PipelineSizer needs a PipelineModel")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        q = YieldQuery(self.target_delay, self.target_yield)
        self.baseline_ = balanced_baseline(X, q)
        self.solution_ = global_optimize(X, q, mode=self.mode, max_iter=self.max_iter,
                                         start=self.baseline_)
        self.fitted_pipeline_ = X
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_")
        if X != self.fitted_pipeline_:
            raise ValueError("transform expects the pipeline passed to fit")
        return self.solution_.pipeline
