"""Univariate least squares fits with exact leave-one-out coefficients.

Every leave-one-out fit is obtained by downdating five sufficient
statistics, so all n refits of one column cost O(n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DegenerateFeature

# LOO variance below this fraction of the full-sample variance is a zero
DEGENERATE_TOL = 1e-10


@dataclass(frozen=True)
class UniFit:
    b0: float
    b1: float
    loo_eta: np.ndarray
    loo_b0: np.ndarray
    loo_b1: np.ndarray


def loo_mean(f: np.ndarray) -> np.ndarray:
    """Leave-one-out means along axis 0: entry i is the mean of f without row i."""
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[0]
    return (f.sum(axis=0) - f) / (n - 1)


@dataclass(frozen=True)
class UniFitBatch:
    """Univariate fits for each column of a matrix, plus a degeneracy mask."""

    b0: np.ndarray
    b1: np.ndarray
    loo_eta: np.ndarray
    loo_b0: np.ndarray
    loo_b1: np.ndarray
    degenerate: np.ndarray

    def __getitem__(self, j) -> UniFit:
        return UniFit(float(self.b0[j]), float(self.b1[j]), self.loo_eta[:, j],
                      self.loo_b0[:, j], self.loo_b1[:, j])


def uni_fit_loo_matrix(F: np.ndarray, y: np.ndarray) -> UniFitBatch:
    """Fit ``y ~ 1 + F[:, j]`` for every column j, with all LOO refits.

    Data are centered at the full-sample means first, which leaves slopes
    unchanged and keeps the downdated moments free of cancellation.
    """
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    n, m = F.shape
    if n < 3:
        raise ValueError("leave-one-out fits need n >= 3")
    xbar = F.mean(axis=0)
    ybar = y.mean()
    xc = F - xbar
    yc = (y - ybar)[:, None]

    var_full = (xc * xc).mean(axis=0)
    cov_full = (xc * yc).mean(axis=0)
    degenerate = var_full <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = np.where(degenerate, 0.0, cov_full / np.where(degenerate, 1.0, var_full))
    b0 = ybar - b1 * xbar

    lx = loo_mean(xc)
    ly = loo_mean(yc)
    lxx = loo_mean(xc * xc)
    lxy = loo_mean(xc * yc)
    var_loo = lxx - lx * lx
    cov_loo = lxy - ly * lx
    bad = var_loo <= DEGENERATE_TOL * var_full
    degenerate |= bad.any(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        loo_b1 = np.where(bad, 0.0, cov_loo / np.where(bad, 1.0, var_loo))
    # intercept in centered coordinates, then shifted back
    loo_b0 = (ly - loo_b1 * lx) + ybar - loo_b1 * xbar
    loo_eta = loo_b0 + loo_b1 * F
    return UniFitBatch(b0=b0, b1=b1, loo_eta=loo_eta, loo_b0=loo_b0,
                       loo_b1=loo_b1, degenerate=degenerate)


def uni_fit_loo(feature: np.ndarray, y: np.ndarray) -> UniFit:
    batch = uni_fit_loo_matrix(np.asarray(feature, dtype=np.float64)[:, None], y)
    if batch.degenerate[0]:
        raise DegenerateFeature(
            "feature has zero variance on at least one leave-one-out subsample")
    return batch[0]
