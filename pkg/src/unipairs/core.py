"""Numeric primitives shared by every stage of the fit.

Column standardization with exact inverse bookkeeping, small exact least
squares solves (batched over many independent problems), and Student-t /
chi-square tail probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

PIVOT_TOL = 1e-12


class UniPairsError(Exception):
    """Base class for errors raised by this package."""


class AllColumnsConstant(UniPairsError):
    pass


class DegenerateFeature(UniPairsError):
    pass


class DimensionMismatch(UniPairsError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Design matrix and response.

    For the Cox family ``y`` holds the observed times and ``status`` the
    event indicators (1 = event, 0 = censored).
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: Optional[Sequence[str]] = None
    status: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch(
                f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if X.shape[1] < 1:
            raise DimensionMismatch("X needs at least one column")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        names = self.feature_names
        if names is None:
            names = [f"x{j}" for j in range(X.shape[1])]
        names = tuple(str(s) for s in names)
        if len(names) != X.shape[1]:
            raise DimensionMismatch(
                f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)
        if self.status is not None:
            status = np.asarray(self.status, dtype=np.float64)
            if status.shape != y.shape:
                raise DimensionMismatch("status must have the same length as y")
            object.__setattr__(self, "status", status)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class StandardizedDesign:
    """Centered and scaled copy of the retained (non-constant) columns.

    ``Xs`` only holds retained columns; ``position[j]`` maps an original
    column index to its column in ``Xs`` (-1 when dropped). ``mu`` and
    ``sigma`` are indexed by original column, with ``sigma == 0`` marking a
    dropped column.
    """

    Xs: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    kept: np.ndarray
    dropped: np.ndarray
    position: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.mu.shape[0]

    @property
    def n(self) -> int:
        return self.Xs.shape[0]

    def column(self, j: int) -> np.ndarray:
        pos = self.position[j]
        if pos < 0:
            raise KeyError(f"column {j} was dropped as constant")
        return self.Xs[:, pos]

    def columns(self, idx) -> np.ndarray:
        pos = self.position[np.asarray(idx, dtype=np.intp)]
        if np.any(pos < 0):
            raise KeyError("request includes dropped columns")
        return self.Xs[:, pos]

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Standardize new rows with the stored moments (retained columns only)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise DimensionMismatch(
                f"expected {self.p} columns, got shape {X.shape}")
        k = self.kept
        return (X[:, k] - self.mu[k]) / self.sigma[k]


def standardize(data: Dataset | np.ndarray) -> StandardizedDesign:
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise ValueError("standardize needs at least two rows")
    mu = X.mean(axis=0)
    sigma = X.std(axis=0, ddof=1)
    # exact zero spread, or spread at the level of rounding error in the mean
    const = sigma <= 1e-13 * np.maximum(1.0, np.abs(mu))
    sigma = np.where(const, 0.0, sigma)
    kept = np.flatnonzero(~const)
    if kept.size == 0:
        raise AllColumnsConstant("every column of X is constant")
    position = np.full(p, -1, dtype=np.intp)
    position[kept] = np.arange(kept.size)
    Xs = (X[:, kept] - mu[kept]) / sigma[kept]
    return StandardizedDesign(
        Xs=Xs, mu=mu, sigma=sigma, kept=kept,
        dropped=np.flatnonzero(const), position=position)


def destandardize(design: StandardizedDesign) -> np.ndarray:
    """Rebuild the original design; dropped columns come back as their constant."""
    X = np.tile(design.mu, (design.n, 1))
    k = design.kept
    X[:, k] = design.Xs * design.sigma[k] + design.mu[k]
    return X


def sweep_solve(G: np.ndarray, b: np.ndarray, tol: float = PIVOT_TOL):
    """Solve batches of symmetric normal equations ``G x = b`` by sweeping.

    Parameters
    ----------
    G : (m, k, k) array
        Gram matrices, assumed symmetric positive semi-definite.
    b : (m, k) array
        Right-hand sides.

    Returns
    -------
    coef : (m, k) array
        Solutions; entries for dependent columns are set to 0.
    inv_diag : (m, k) array
        Diagonal of the (generalized) inverse; ``nan`` for dependent columns.
    dependent : (m, k) bool array
        Columns whose residual diagonal fell below ``tol`` times their
        original diagonal, i.e. 1 - R^2 on the earlier columns < tol.
    """
    G = np.asarray(G, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k, _ = G.shape
    A = np.empty((m, k + 1, k + 1))
    A[:, :k, :k] = G
    A[:, :k, k] = b
    A[:, k, :k] = b
    A[:, k, k] = 0.0
    diag0 = np.diagonal(G, axis1=1, axis2=2).copy()
    dependent = np.zeros((m, k), dtype=bool)
    for piv in range(k):
        d = A[:, piv, piv]
        ok = (d > tol * diag0[:, piv]) & (diag0[:, piv] > 0)
        dependent[:, piv] = ~ok
        if not ok.any():
            continue
        d_safe = np.where(ok, d, 1.0)
        row = A[:, piv, :] / d_safe[:, None]
        colv = A[:, :, piv].copy()
        upd = A - colv[:, :, None] * row[:, None, :]
        upd[:, piv, :] = row
        upd[:, :, piv] = -colv / d_safe[:, None]
        upd[:, piv, piv] = 1.0 / d_safe
        A = np.where(ok[:, None, None], upd, A)
    coef = A[:, :k, k].copy()
    inv_diag = np.diagonal(A[:, :k, :k], axis1=1, axis2=2).copy()
    coef[dependent] = 0.0
    inv_diag[dependent] = np.nan
    return coef, inv_diag, dependent


@dataclass(frozen=True)
class OlsResult:
    coef: np.ndarray
    rss: float
    xtx_inv_diag: np.ndarray
    rank_deficient: bool


def ols_small(A: np.ndarray, y: np.ndarray) -> OlsResult:
    """Exact least squares for a handful of columns (k <= 4)."""
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = A.shape
    if k > 4:
        raise ValueError("ols_small handles at most 4 columns")
    if n <= k:
        raise ValueError("ols_small needs more rows than columns")
    coef, inv_diag, dep = sweep_solve((A.T @ A)[None], (A.T @ y)[None])
    resid = y - A @ coef[0]
    return OlsResult(coef=coef[0], rss=float(resid @ resid),
                     xtx_inv_diag=inv_diag[0], rank_deficient=bool(dep.any()))


def t_two_sided_p(t, df):
    """P(|T_df| >= |t|) through the regularized incomplete beta function."""
    t = np.asarray(t, dtype=np.float64)
    df = np.asarray(df, dtype=np.float64)
    if np.any(df < 1):
        raise ValueError("df must be >= 1")
    with np.errstate(over="ignore"):
        x = df / (df + t * t)
    p = special.betainc(0.5 * df, 0.5, x)
    p = np.where(np.isinf(t), 0.0, p)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def chi2_1_sf(stat):
    """Upper tail of the chi-square distribution with one degree of freedom."""
    stat = np.maximum(np.asarray(stat, dtype=np.float64), 0.0)
    p = special.chdtrc(1.0, stat)
    return float(p) if np.ndim(p) == 0 else p
