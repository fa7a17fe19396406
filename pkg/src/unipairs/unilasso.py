"""Univariate-guided lasso.

Each candidate column gets its own univariate fit; the leave-one-out
predictions of those fits become the regressors of a lasso whose
coefficients are constrained to be nonnegative. Multiplying back by the
univariate slopes gives coefficients on the candidate columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .glm import get_family, glm_uni_fit_matrix
from .solver import CvResult, LassoProblem, SparseFit, cross_validate, fit_at_best

MIN_SLOPE = 1e-12


@dataclass(frozen=True)
class UniLassoFit:
    """Fitted UniLasso model on the candidate columns it was given.

    ``theta``, ``beta_s``, ``uni_b0`` and ``uni_b1`` are indexed by
    candidate column; unusable columns (degenerate univariate fits or
    vanishing slopes) carry zeros and ``usable == False``.
    """

    theta0: float
    theta: np.ndarray
    beta0_s: float
    beta_s: np.ndarray
    uni_b0: np.ndarray
    uni_b1: np.ndarray
    usable: np.ndarray
    cv: CvResult
    lasso: SparseFit
    loo_eta: np.ndarray
    family: str = "gaussian"

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.beta_s)

    def linear_predictor(self, columns: np.ndarray) -> np.ndarray:
        return self.beta0_s + np.asarray(columns, dtype=np.float64) @ self.beta_s


def unilasso_fit(columns: np.ndarray, y: np.ndarray, k: int = 10, seed=0,
                 family="gaussian", n_lambda: int = 100, ratio: float = 1e-3,
                 rule: str = "min") -> UniLassoFit:
    fam = get_family(family)
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim == 1:
        columns = columns[:, None]
    n, m = columns.shape
    uni = glm_uni_fit_matrix(columns, y, fam)
    usable = ~uni.degenerate & (np.abs(uni.b1) >= MIN_SLOPE)
    idx = np.flatnonzero(usable)
    problem = LassoProblem(uni.loo_eta[:, idx], y, nonneg_mask=np.ones(idx.size, dtype=bool),
                           intercept=fam.has_intercept)
    cv = cross_validate(problem, k=k, seed=seed, n_lambda=n_lambda, ratio=ratio,
                        family=fam, rule=rule)
    lasso = fit_at_best(problem, cv, fam)
    theta = np.zeros(m)
    theta[idx] = lasso.coefs
    b0 = np.where(usable, uni.b0, 0.0)
    b1 = np.where(usable, uni.b1, 0.0)
    beta_s = theta * b1
    beta0_s = lasso.intercept + float(theta @ b0)
    return UniLassoFit(theta0=lasso.intercept, theta=theta, beta0_s=beta0_s, beta_s=beta_s,
                       uni_b0=b0, uni_b1=b1, usable=usable, cv=cv, lasso=lasso,
                       loo_eta=uni.loo_eta, family=fam.name)


def prevalidated_predictions(fit: UniLassoFit) -> np.ndarray:
    """Out-of-fold linear predictor at the selected penalty."""
    return fit.cv.prevalidated
