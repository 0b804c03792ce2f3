"""Input checks shared by the analysis modules and the estimator wrappers."""

from __future__ import annotations

import math

import numpy as np

SYMMETRY_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ModelError(ValueError):
    """A pipeline or variation model that violates its invariants."""


def check_finite(value, name):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


def check_nonnegative(value, name):
    value = check_finite(value, name)
    if value < 0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return value


def check_probability(p, name="probability", open_interval=True):
    p = float(p)
    if open_interval:
        ok = 0.0 < p < 1.0
    else:
        ok = 0.0 <= p <= 1.0
    if not ok:
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise DomainError(f"{name} must lie in {bounds}, got {p!r}")
    return p


def check_correlation(matrix, n=None, name="correlation matrix"):
    """Validate a correlation matrix and return it as a float array.

    Diagonal must be exactly 1, entries within [-1, 1] and the matrix
    symmetric to 1e-12.
    """
    c = np.array(matrix, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ModelError(f"{name} must be square, got shape {c.shape}")
    if n is not None and c.shape[0] != n:
        raise ModelError(f"{name} has dimension {c.shape[0]}, expected {n}")
    if not np.all(np.isfinite(c)):
        raise ModelError(f"{name} has non-finite entries")
    if not np.all(np.diag(c) == 1.0):
        raise ModelError(f"{name} diagonal entries must be exactly 1")
    if np.any(np.abs(c) > 1.0):
        raise ModelError(f"{name} entries must lie in [-1, 1]")
    if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL:
        raise ModelError(f"{name} is not symmetric")
    return c


def check_moments_array(X):
    """Coerce ``X`` to an (n, 2) array of (mean, std_dev) rows."""
    a = np.asarray(X, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
        raise DomainError(f"expected an (n, 2) array of (mean, std_dev), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("moments must be finite")
    if np.any(a[:, 1] < 0):
        raise DomainError("standard deviations must be >= 0")
    return a
