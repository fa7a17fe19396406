"""Coordinate descent for lasso problems with optional nonnegativity.

Objective (weights default to one)::

    (1/n) * sum_i w_i (y_i - b0 - F_i . theta)^2 + lam * ||theta||_1

with ``theta_j >= 0`` wherever ``nonneg[j]``. The intercept is profiled out
by weighted centering. Non-Gaussian families are handled by iteratively
reweighted least squares around the same kernel, with the quadratic model
of ``-(2/n) * loglik``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

MAX_SWEEPS = 10_000
COEF_TOL = 1e-8


@numba.njit(cache=True, nogil=True)
def _cd_kernel(F, r, w, a, lam, nonneg, beta, candidate, max_sweeps, tol):
    """Cyclic CD on candidate coordinates; ``r`` holds the current residual.

    Alternates a full sweep with sweeps restricted to the nonzero set until
    a full sweep changes nothing by more than ``tol``.
    """
    n, m = F.shape
    half = 0.5 * lam
    # a relative margin keeps the solution at lambda_max exactly zero
    cut = half * (1.0 + 1e-12)
    sweeps = 0
    active = np.zeros(m, dtype=np.bool_)
    while sweeps < max_sweeps:
        # full pass
        max_delta = 0.0
        for j in range(m):
            if not candidate[j] or a[j] <= 0.0:
                continue
            g = 0.0
            for i in range(n):
                g += w[i] * F[i, j] * r[i]
            rho = g / n + a[j] * beta[j]
            if rho > cut:
                new = (rho - half) / a[j]
            elif rho < -cut and not nonneg[j]:
                new = (rho + half) / a[j]
            else:
                new = 0.0
            d = new - beta[j]
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * F[i, j]
                beta[j] = new
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
            active[j] = new != 0.0
        sweeps += 1
        if max_delta < tol:
            return sweeps, True
        # inner passes on the active set
        while sweeps < max_sweeps:
            max_delta = 0.0
            for j in range(m):
                if not active[j]:
                    continue
                g = 0.0
                for i in range(n):
                    g += w[i] * F[i, j] * r[i]
                rho = g / n + a[j] * beta[j]
                if rho > cut:
                    new = (rho - half) / a[j]
                elif rho < -cut and not nonneg[j]:
                    new = (rho + half) / a[j]
                else:
                    new = 0.0
                d = new - beta[j]
                if d != 0.0:
                    for i in range(n):
                        r[i] -= d * F[i, j]
                    beta[j] = new
                    ad = abs(d)
                    if ad > max_delta:
                        max_delta = ad
            sweeps += 1
            if max_delta < tol:
                break
    return sweeps, False


@dataclass(frozen=True)
class LassoProblem:
    """Regressor matrix, target and per-coordinate sign constraints.

    For non-Gaussian families ``y`` is whatever the family's response
    representation is (0/1 labels, or an (n, 2) array of time and status).
    """

    features: np.ndarray
    y: np.ndarray
    nonneg_mask: Optional[np.ndarray] = None
    intercept: bool = True
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        F = np.ascontiguousarray(self.features, dtype=np.float64)
        if F.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n, m = F.shape
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape[0] != n:
            raise ValueError("features and y disagree on n")
        mask = (np.zeros(m, dtype=bool) if self.nonneg_mask is None
                else np.asarray(self.nonneg_mask, dtype=bool))
        if mask.shape != (m,):
            raise ValueError("nonneg_mask length must equal the number of features")
        if not np.all(np.isfinite(F)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "nonneg_mask", mask)
        if self.offset is not None:
            object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "LassoProblem":
        return LassoProblem(self.features[rows], self.y[rows], self.nonneg_mask,
                            self.intercept,
                            None if self.offset is None else self.offset[rows])


@dataclass(frozen=True)
class SparseFit:
    lam: float
    intercept: float
    coefs: np.ndarray
    kkt_residual: float
    n_iter: int
    converged: bool = True

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.coefs)


@dataclass(frozen=True)
class CvResult:
    lambda_path: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_best: float
    best_index: int
    prevalidated: np.ndarray
    fold_assignment: np.ndarray
    path_coefs: np.ndarray = field(repr=False)
    path_intercepts: np.ndarray = field(repr=False)

    @property
    def cv_best(self) -> float:
        return float(self.cv_mean[self.best_index])


# ---------------------------------------------------------------------------
# Gaussian (weighted least squares) core
# ---------------------------------------------------------------------------

class _WlsState:
    """Centered weighted design for repeated solves at different penalties."""

    def __init__(self, F, y, w, intercept):
        n = F.shape[0]
        self.n = n
        self.w = np.ascontiguousarray(w, dtype=np.float64)
        sw = self.w.sum()
        if intercept and sw > 0:
            self.xbar = (self.w @ F) / sw
            self.ybar = float(self.w @ y) / sw
        else:
            self.xbar = np.zeros(F.shape[1])
            self.ybar = 0.0
        self.Fc = np.asfortranarray(F - self.xbar)
        self.yc = np.ascontiguousarray(y - self.ybar)
        self.a = (self.w @ (self.Fc * self.Fc)) / n

    def gradient(self, r):
        """Gradient of the smooth part, -(2/n) F^T W r."""
        return -2.0 / self.n * (self.Fc.T @ (self.w * r))

    def solve(self, lam, nonneg, beta, tol, use_strong=None):
        r = self.yc - self.Fc @ beta
        m = beta.size
        if use_strong is None:
            candidate = np.ones(m, dtype=np.bool_)
        else:
            candidate = use_strong | (beta != 0)
        total = 0
        converged = True
        while True:
            sweeps, ok = _cd_kernel(self.Fc, r, self.w, self.a, lam, nonneg, beta,
                                    candidate, MAX_SWEEPS - total, tol)
            total += sweeps
            converged = ok
            if candidate.all() or not ok:
                break
            grad = self.gradient(r)
            viol = _kkt_violation(grad, beta, lam, nonneg) > 1e-9
            viol &= ~candidate
            if not viol.any():
                break
            candidate = candidate | viol
        return beta, r, total, converged

    def intercept(self, beta):
        return self.ybar - float(self.xbar @ beta)


def _kkt_violation(grad, beta, lam, nonneg):
    """Per-coordinate violation of the lasso optimality conditions."""
    viol = np.where(beta > 0, np.abs(grad + lam),
                    np.where(beta < 0, np.abs(grad - lam), 0.0))
    at_zero = beta == 0
    free = np.maximum(np.abs(grad) - lam, 0.0)
    lower = np.maximum(-grad - lam, 0.0)
    viol = np.where(at_zero, np.where(nonneg, lower, free), viol)
    return viol


def kkt_residual(problem: LassoProblem, intercept: float, coefs: np.ndarray,
                 lam: float, weights: Optional[np.ndarray] = None) -> float:
    F = problem.features
    w = np.ones(problem.n) if weights is None else weights
    r = problem.y - intercept - F @ coefs
    if problem.offset is not None:
        r = r - problem.offset
    grad = -2.0 / problem.n * (F.T @ (w * r))
    return float(_kkt_violation(grad, coefs, lam, problem.nonneg_mask).max(initial=0.0))


def objective(problem: LassoProblem, intercept: float, coefs: np.ndarray, lam: float) -> float:
    r = problem.y - intercept - problem.features @ coefs
    if problem.offset is not None:
        r = r - problem.offset
    return float(r @ r) / problem.n + lam * float(np.abs(coefs).sum())


def _coef_tol(y):
    scale = float(np.max(np.abs(y))) if y.size else 1.0
    return COEF_TOL * max(1.0, scale)


def solve(problem: LassoProblem, lam: float, warm_start: Optional[np.ndarray] = None,
          family=None) -> SparseFit:
    """Minimize the penalized objective at a single penalty level."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if family is not None and family.name != "gaussian":
        coefs, b0 = glm_path(problem, np.array([lam]), family,
                             warm_start=warm_start)
        fit_c, fit_b0 = coefs[0], float(b0[0])
        kkt = glm_kkt_residual(problem, fit_b0, fit_c, lam, family)
        return SparseFit(lam=lam, intercept=fit_b0, coefs=fit_c,
                         kkt_residual=kkt, n_iter=0, converged=True)
    y = problem.y if problem.offset is None else problem.y - problem.offset
    st = _WlsState(problem.features, y, np.ones(problem.n), problem.intercept)
    beta = np.zeros(problem.m) if warm_start is None else np.array(warm_start, dtype=np.float64)
    beta = np.where(problem.nonneg_mask, np.maximum(beta, 0.0), beta)
    beta, _, n_iter, ok = st.solve(lam, problem.nonneg_mask, beta, _coef_tol(y))
    if not ok:
        warnings.warn(f"coordinate descent hit {MAX_SWEEPS} sweeps at lambda={lam:g}")
    b0 = st.intercept(beta)
    return SparseFit(lam=lam, intercept=b0, coefs=beta,
                     kkt_residual=kkt_residual(problem, b0, beta, lam),
                     n_iter=n_iter, converged=ok)


def lambda_max(problem: LassoProblem, family=None) -> float:
    """Smallest penalty whose solution is all zero."""
    if family is not None and family.name != "gaussian":
        g = glm_null_gradient(problem, family)
    else:
        y = problem.y if problem.offset is None else problem.y - problem.offset
        st = _WlsState(problem.features, y, np.ones(problem.n), problem.intercept)
        g = -st.gradient(st.yc)
    g = np.where(problem.nonneg_mask, np.maximum(g, 0.0), np.abs(g))
    return float(g.max(initial=0.0))


def lambda_grid(problem: LassoProblem, n_lambda: int = 100, ratio: float = 1e-3,
                family=None) -> np.ndarray:
    """Log-spaced descending penalties from ``lambda_max`` to ``ratio * lambda_max``.

    With no usable signal the grid collapses to one tiny penalty.
    """
    lmax = lambda_max(problem, family)
    if family is None or family.name == "gaussian":
        y = problem.y
        scale = float(np.var(y)) if y.size else 1.0
    else:
        scale = 1.0
    floor = 1e-12 * max(1.0, scale)
    if lmax <= floor:
        return np.array([floor])
    return np.geomspace(lmax, ratio * lmax, n_lambda)


def _strong_set(grad, lam_new, lam_old, nonneg):
    thresh = 2.0 * lam_new - lam_old
    g = np.where(nonneg, np.maximum(-grad, 0.0), np.abs(grad))
    return g >= thresh


def lasso_path(problem: LassoProblem, lambdas: np.ndarray, weights=None, y=None):
    """Warm-started solutions along a descending grid.

    Returns ``(coefs (L, m), intercepts (L,), converged (L,))``.
    """
    target = problem.y if y is None else y
    if problem.offset is not None and y is None:
        target = target - problem.offset
    w = np.ones(problem.n) if weights is None else weights
    st = _WlsState(problem.features, target, w, problem.intercept)
    tol = _coef_tol(target)
    beta = np.zeros(problem.m)
    L = len(lambdas)
    coefs = np.zeros((L, problem.m))
    b0 = np.zeros(L)
    conv = np.ones(L, dtype=bool)
    r = st.yc.copy()
    lam_prev = None
    for i, lam in enumerate(lambdas):
        strong = None
        if lam_prev is not None:
            strong = _strong_set(st.gradient(r), lam, lam_prev, problem.nonneg_mask)
        beta, r, _, ok = st.solve(lam, problem.nonneg_mask, beta, tol, strong)
        coefs[i] = beta
        b0[i] = st.intercept(beta)
        conv[i] = ok
        lam_prev = lam
    if not conv.all():
        warnings.warn("coordinate descent did not converge at some penalties")
    return coefs, b0, conv


# ---------------------------------------------------------------------------
# IRLS for likelihood families
# ---------------------------------------------------------------------------

def _eta(problem, b0, coefs):
    eta = b0 + problem.features @ coefs
    if problem.offset is not None:
        eta = eta + problem.offset
    return eta


def glm_null_gradient(problem: LassoProblem, family) -> np.ndarray:
    """(2/n) d loglik / d theta at theta = 0 with the intercept optimized."""
    b0 = family.null_intercept(problem.y, problem.offset) if problem.intercept else 0.0
    eta = b0 + (0.0 if problem.offset is None else problem.offset) + np.zeros(problem.n)
    g, _ = family.grad_hess(eta, problem.y)
    return 2.0 / problem.n * (problem.features.T @ g)


def glm_kkt_residual(problem, b0, coefs, lam, family) -> float:
    g, _ = family.grad_hess(_eta(problem, b0, coefs), problem.y)
    grad = -2.0 / problem.n * (problem.features.T @ g)
    return float(_kkt_violation(grad, coefs, lam, problem.nonneg_mask).max(initial=0.0))


def glm_penalized_objective(problem, b0, coefs, lam, family) -> float:
    ll = family.loglik(_eta(problem, b0, coefs), problem.y)
    return -2.0 / problem.n * ll + lam * float(np.abs(coefs).sum())


def glm_path(problem: LassoProblem, lambdas: np.ndarray, family,
             warm_start=None, max_outer: int = 100, tol: float = 1e-10):
    """Penalized likelihood path via IRLS around the weighted CD kernel."""
    n, m = problem.n, problem.m
    L = len(lambdas)
    coefs = np.zeros((L, m))
    b0s = np.zeros(L)
    beta = np.zeros(m) if warm_start is None else np.array(warm_start, dtype=np.float64)
    b0 = family.null_intercept(problem.y, problem.offset) if problem.intercept else 0.0
    off = np.zeros(n) if problem.offset is None else problem.offset
    for li, lam in enumerate(lambdas):
        obj_old = glm_penalized_objective(problem, b0, beta, lam, family)
        for _ in range(max_outer):
            eta = _eta(problem, b0, beta)
            g, h = family.grad_hess(eta, problem.y)
            w = np.maximum(h, 1e-8)
            z = eta - off + g / w
            st = _WlsState(problem.features, z, w, problem.intercept)
            new_beta, _, _, _ = st.solve(lam, problem.nonneg_mask, beta.copy(),
                                         COEF_TOL * 1e-2)
            new_b0 = st.intercept(new_beta) if problem.intercept else 0.0
            obj = glm_penalized_objective(problem, new_b0, new_beta, lam, family)
            # step halving keeps the objective monotone
            step = 1.0
            while obj > obj_old + 1e-12 * abs(obj_old) and step > 1e-6:
                step *= 0.5
                cand_b = beta + step * (new_beta - beta)
                cand_0 = b0 + step * (new_b0 - b0)
                obj = glm_penalized_objective(problem, cand_0, cand_b, lam, family)
                new_beta, new_b0 = cand_b, cand_0
            delta = max(float(np.max(np.abs(new_beta - beta), initial=0.0)), abs(new_b0 - b0))
            beta, b0 = new_beta, new_b0
            done = abs(obj_old - obj) <= tol * max(1.0, abs(obj)) and delta < 1e-7
            obj_old = obj
            if done:
                break
        coefs[li] = beta
        b0s[li] = b0
    return coefs, b0s


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def fold_assignment(n: int, k: int, seed) -> np.ndarray:
    """Shuffle indices and deal them round-robin into k folds."""
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.intp)
    folds[perm] = np.arange(n) % k
    return folds


def _path(problem, lambdas, family):
    if family is None or family.name == "gaussian":
        coefs, b0, _ = lasso_path(problem, lambdas)
    else:
        coefs, b0 = glm_path(problem, lambdas, family)
    return coefs, b0


def cross_validate(problem: LassoProblem, k: int = 10, seed=0, n_lambda: int = 100,
                   ratio: float = 1e-3, lambdas: Optional[np.ndarray] = None,
                   family=None, rule: str = "min") -> CvResult:
    """K-fold CV over a shared penalty grid, with prevalidated predictions.

    The full-data path doubles as the refit at every grid point. Ties in
    the CV curve resolve to the larger penalty. ``rule="1se"`` picks the
    largest penalty within one standard error of the minimum.
    """
    n = problem.n
    if k < 2 or n < k:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    if lambdas is None:
        lambdas = lambda_grid(problem, n_lambda, ratio, family)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    folds = fold_assignment(n, k, seed)
    L = len(lambdas)
    pred = np.zeros((n, L))
    fold_err = np.zeros((k, L))
    fold_n = np.zeros(k)
    for f in range(k):
        test = folds == f
        train = ~test
        sub = problem.subset(train)
        coefs, b0 = _path(sub, lambdas, family)
        hold = problem.subset(test)
        eta = b0[None, :] + hold.features @ coefs.T
        if hold.offset is not None:
            eta = eta + hold.offset[:, None]
        pred[test] = eta
        fold_n[f] = test.sum()
        if family is None or family.name == "gaussian":
            fold_err[f] = ((hold.y[:, None] - eta) ** 2).mean(axis=0)
        else:
            fold_err[f] = [family.deviance(eta[:, l], hold.y) / fold_n[f] for l in range(L)]
    wts = fold_n / n
    cv_mean = wts @ fold_err
    cv_se = np.sqrt((wts @ (fold_err - cv_mean) ** 2) / (k - 1))
    best = int(np.argmin(cv_mean))
    if rule == "1se":
        cutoff = cv_mean[best] + cv_se[best]
        best = int(np.flatnonzero(cv_mean <= cutoff)[0])
    elif rule != "min":
        raise ValueError(f"unknown rule {rule!r}")
    coefs, b0 = _path(problem, lambdas, family)
    return CvResult(lambda_path=lambdas, cv_mean=cv_mean, cv_se=cv_se,
                    lambda_best=float(lambdas[best]), best_index=best,
                    prevalidated=pred[:, best].copy(), fold_assignment=folds,
                    path_coefs=coefs, path_intercepts=b0)


def fit_at_best(problem: LassoProblem, cv: CvResult, family=None) -> SparseFit:
    """Full-data fit at the CV-selected penalty, polished from the path solution."""
    i = cv.best_index
    lam = cv.lambda_best
    if family is None or family.name == "gaussian":
        return solve(problem, lam, warm_start=cv.path_coefs[i])
    coefs, b0 = cv.path_coefs[i], float(cv.path_intercepts[i])
    return SparseFit(lam=lam, intercept=b0, coefs=coefs,
                     kkt_residual=glm_kkt_residual(problem, b0, coefs, lam, family),
                     n_iter=0, converged=True)
