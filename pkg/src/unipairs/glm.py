"""Binomial (logit) and Cox proportional-hazards support.

Families expose the log-likelihood in the linear predictor together with
its gradient and the (negated) diagonal of its Hessian; that is all the
IRLS path, the approximate leave-one-out fits and the likelihood-ratio
scan need.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import special

from .core import (StandardizedDesign, UniPairsError, chi2_1_sf, sweep_solve)
from .tripletscan import ScanResult, make_scan_result, run_pair_tasks
from .univariate import UniFit, UniFitBatch, uni_fit_loo_matrix

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
SEPARATION_BOUND = 30.0


class Separation(UniPairsError):
    pass


class NoEvents(UniPairsError):
    pass


# ---------------------------------------------------------------------------
# Cox partial likelihood
# ---------------------------------------------------------------------------

def _risk_index(times):
    order = np.argsort(times, kind="stable")
    t = times[order]
    first = np.searchsorted(t, t, side="left")
    last = np.searchsorted(t, t, side="right") - 1
    return order, first, last


def cox_partial_loglik(eta, times, status):
    """Breslow partial log-likelihood, its gradient and Hessian diagonal.

    Returns ``(loglik, gradient, diag_hessian)``; the Hessian diagonal is
    the signed second derivative (non-positive).
    """
    eta = np.asarray(eta, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    status = np.asarray(status, dtype=np.float64)
    if not np.any(status > 0):
        raise NoEvents("Cox partial likelihood needs at least one event")
    order, first, last = _risk_index(times)
    e = eta[order]
    d = status[order]
    c = e.max()
    w = np.exp(e - c)
    # risk-set sums: everyone with time >= t_i, ties share the set
    S = np.cumsum(w[::-1])[::-1][first]
    loglik = float(np.sum(d * (e - c - np.log(S))))
    A = np.cumsum(d / S)[last]
    B = np.cumsum(d / S ** 2)[last]
    g = d - w * A
    h = -w * A + w * w * B
    grad = np.empty_like(g)
    hess = np.empty_like(h)
    grad[order] = g
    hess[order] = h
    return loglik, grad, hess


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

class Gaussian:
    name = "gaussian"
    has_intercept = True

    def response(self, data):
        return np.asarray(data.y, dtype=np.float64)

    def validate(self, resp):
        return resp

    def loglik(self, eta, y):
        r = y - eta
        return -0.5 * float(r @ r)

    def grad_hess(self, eta, y):
        return y - eta, np.ones_like(eta)

    def deviance(self, eta, y):
        return -2.0 * self.loglik(eta, y)

    def null_intercept(self, y, offset=None):
        return float(np.mean(y if offset is None else y - offset))

    def mean(self, eta):
        return eta


class Binomial:
    name = "binomial"
    has_intercept = True

    def response(self, data):
        return self.validate(np.asarray(data.y, dtype=np.float64))

    def validate(self, y):
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("binomial responses must be 0/1")
        if y.min() == y.max():
            raise ValueError("binomial response needs both classes present")
        return y

    def loglik(self, eta, y):
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    def grad_hess(self, eta, y):
        mu = special.expit(eta)
        return y - mu, mu * (1.0 - mu)

    def deviance(self, eta, y):
        return -2.0 * self.loglik(eta, y)

    def null_intercept(self, y, offset=None):
        if offset is None:
            ybar = np.clip(np.mean(y), 1e-10, 1 - 1e-10)
            return float(special.logit(ybar))
        b = 0.0
        for _ in range(NEWTON_MAX_ITER):
            mu = special.expit(offset + b)
            g = np.sum(y - mu)
            h = np.sum(mu * (1 - mu))
            step = g / max(h, 1e-12)
            b += step
            if abs(step) < 1e-12:
                break
        return float(b)

    def mean(self, eta):
        return special.expit(eta)

    def batched(self, eta, resp):
        """Per-column log-likelihood, gradient and curvature for (n, m) eta."""
        y = resp[:, None]
        mu = special.expit(eta)
        ll = np.sum(y * eta - np.logaddexp(0.0, eta), axis=0)
        return ll, y - mu, mu * (1.0 - mu)


class Cox:
    """Cox model; responses are (n, 2) arrays of (time, status)."""

    name = "cox"
    has_intercept = False

    def response(self, data):
        if data.status is None:
            raise ValueError("the cox family needs event status")
        return self.validate(np.column_stack([data.y, data.status]))

    def validate(self, resp):
        resp = np.asarray(resp, dtype=np.float64)
        if resp.ndim != 2 or resp.shape[1] != 2:
            raise ValueError("cox response must be an (n, 2) array of time, status")
        if np.any(resp[:, 0] <= 0):
            raise ValueError("survival times must be positive")
        if not np.all((resp[:, 1] == 0) | (resp[:, 1] == 1)):
            raise ValueError("status must be 0/1")
        if not np.any(resp[:, 1] == 1):
            raise NoEvents("no events in the survival response")
        return resp

    def loglik(self, eta, resp):
        if not np.any(resp[:, 1] > 0):
            return 0.0
        return cox_partial_loglik(eta, resp[:, 0], resp[:, 1])[0]

    def grad_hess(self, eta, resp):
        if not np.any(resp[:, 1] > 0):
            return np.zeros_like(eta), np.zeros_like(eta)
        _, g, h = cox_partial_loglik(eta, resp[:, 0], resp[:, 1])
        return g, -h

    def deviance(self, eta, resp):
        return -2.0 * self.loglik(eta, resp)

    def null_intercept(self, resp, offset=None):
        return 0.0

    def mean(self, eta):
        return np.exp(eta)


FAMILIES = {"gaussian": Gaussian(), "binomial": Binomial(), "cox": Cox()}


def get_family(family):
    if isinstance(family, str):
        try:
            return FAMILIES[family]
        except KeyError:
            raise ValueError(f"unknown family {family!r}") from None
    return family


# ---------------------------------------------------------------------------
# Batched Newton fits
# ---------------------------------------------------------------------------

def _cox_batched(A, coef, resp, cache):
    """Log-likelihood, score and Hessian of the Cox model for a batch of designs.

    A is (n, m, q); the Hessian returned is that of -loglik.
    """
    order, first, last = cache
    d = resp[order, 1]
    As = A[order]
    eta = np.einsum("nmq,mq->nm", As, coef)
    c = eta.max(axis=0)
    w = np.exp(eta - c)
    rc = lambda v: np.cumsum(v[::-1], axis=0)[::-1][first]
    S0 = rc(w)
    S1 = rc(w[:, :, None] * As)
    S2 = rc(w[:, :, None, None] * As[:, :, :, None] * As[:, :, None, :])
    ev = d > 0
    ll = np.sum(d[:, None] * (eta - c - np.log(S0)), axis=0)
    mean1 = S1[ev] / S0[ev][:, :, None]
    score = np.sum(As[ev] - mean1, axis=0)
    hess = np.sum(S2[ev] / S0[ev][:, :, None, None]
                  - mean1[:, :, :, None] * mean1[:, :, None, :], axis=0)
    return ll, score, hess


def batched_newton(A: np.ndarray, resp: np.ndarray, family, intercept_col: Optional[int] = 0,
                   guard_cols=None):
    """Unpenalized maximum likelihood for m independent designs at once.

    Parameters
    ----------
    A : (n, m, q) array
        Design matrices stacked along axis 1.
    guard_cols : sequence of int
        Columns whose coefficients trigger the separation guard.

    Returns
    -------
    coef : (m, q), loglik : (m,), ok : (m,) bool
        ``ok`` is False for non-converged, rank-deficient or separated fits.
    """
    n, m, q = A.shape
    coef = np.zeros((m, q))
    cache = None
    if family.name == "cox":
        cache = _risk_index(resp[:, 0])

    def evaluate(cf):
        if family.name == "binomial":
            eta = np.einsum("nmq,mq->nm", A, cf)
            ll, g, h = family.batched(eta, resp)
            score = np.einsum("nm,nmq->mq", g, A)
            hess = np.einsum("nm,nmq,nmr->mqr", h, A, A)
            return ll, score, hess
        return _cox_batched(A, cf, resp, cache)

    if family.name == "binomial" and intercept_col is not None:
        coef[:, intercept_col] = family.null_intercept(resp)
    guard = list(range(q)) if guard_cols is None else list(guard_cols)
    ll, score, hess = evaluate(coef)
    converged = np.zeros(m, dtype=bool)
    failed = np.zeros(m, dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        converged |= ~failed & (np.max(np.abs(score), axis=1) / n < NEWTON_TOL)
        todo = ~(converged | failed)
        if not todo.any():
            break
        step, _, dep = sweep_solve(hess, score)
        failed |= todo & dep.any(axis=1)
        todo &= ~failed
        t = np.ones(m)
        new = coef + step
        new_ll, new_score, new_hess = evaluate(new)
        for _ in range(30):
            worse = todo & ~(new_ll >= ll - 1e-12 * np.abs(ll))
            if not worse.any():
                break
            t = np.where(worse, 0.5 * t, t)
            new = np.where(todo[:, None], coef + t[:, None] * step, coef)
            new_ll, new_score, new_hess = evaluate(new)
        tiny = todo & (np.max(np.abs(t[:, None] * step), axis=1) < 1e-13)
        coef = np.where(todo[:, None], new, coef)
        ll = np.where(todo, new_ll, ll)
        score = np.where(todo[:, None], new_score, score)
        hess = np.where(todo[:, None, None], new_hess, hess)
        converged |= tiny
        failed |= np.any(np.abs(coef[:, guard]) > SEPARATION_BOUND, axis=1)
    ok = converged & ~failed
    return coef, ll, ok


# ---------------------------------------------------------------------------
# Univariate fits with approximate leave-one-out predictions
# ---------------------------------------------------------------------------

def _design_1(F, intercept):
    n, m = F.shape
    if intercept:
        return np.stack([np.ones((n, m)), F], axis=2)
    return F[:, :, None]


def glm_uni_fit_matrix(F: np.ndarray, resp: np.ndarray, family) -> UniFitBatch:
    """Univariate GLM fit per column with approximate LOO linear predictors.

    The approximation removes observation i through one Newton step from
    the full fit: ``eta_i - g_i h_i / (H_i (1 - h_i))`` with ``h_i`` the
    leverage of row i in the weighted normal equations.
    """
    family = get_family(family)
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if family.name == "gaussian":
        return uni_fit_loo_matrix(F, resp)
    n, m = F.shape
    icpt = family.has_intercept
    A = _design_1(F, icpt)
    slope = 1 if icpt else 0
    coef, _, ok = batched_newton(A, resp, family, intercept_col=0 if icpt else None,
                                 guard_cols=[slope])
    b1 = coef[:, slope]
    b0 = coef[:, 0] if icpt else np.zeros(m)
    eta = b0 + b1 * F
    loo_eta = np.empty_like(eta)
    degenerate = ~ok
    for j in range(m):
        if degenerate[j]:
            loo_eta[:, j] = eta[:, j]
            continue
        g, h = family.grad_hess(eta[:, j], resp)
        Aj = A[:, j, :]
        info = Aj.T @ (h[:, None] * Aj)
        lev = h * np.einsum("nq,qr,nr->n", Aj, np.linalg.inv(info), Aj)
        if np.any(lev >= 1.0) or np.any(h <= 0):
            degenerate[j] = True
            loo_eta[:, j] = eta[:, j]
            continue
        loo_eta[:, j] = eta[:, j] - g * lev / (h * (1.0 - lev))
    nan = np.full((n, m), np.nan)
    return UniFitBatch(b0=b0, b1=b1, loo_eta=loo_eta, loo_b0=nan, loo_b1=nan,
                       degenerate=degenerate)


def glm_uni_fit_approx_loo(feature, response, family) -> UniFit:
    family = get_family(family)
    resp = family.validate(np.asarray(response, dtype=np.float64))
    batch = glm_uni_fit_matrix(np.asarray(feature, dtype=np.float64)[:, None], resp, family)
    if batch.degenerate[0]:
        if family.name == "binomial" and abs(batch.b1[0]) > SEPARATION_BOUND:
            raise Separation("univariate logistic fit diverges (separated data)")
        raise Separation("univariate fit did not converge")
    return batch[0]


def glm_diagnostics(feature, response, family):
    """Fitted linear predictor, gradient, curvature and leverages of one univariate fit."""
    family = get_family(family)
    resp = family.validate(np.asarray(response, dtype=np.float64))
    fit = glm_uni_fit_approx_loo(feature, resp, family)
    x = np.asarray(feature, dtype=np.float64)
    eta = fit.b0 + fit.b1 * x
    g, h = family.grad_hess(eta, resp)
    A = np.column_stack([np.ones_like(x), x]) if family.has_intercept else x[:, None]
    info = A.T @ (h[:, None] * A)
    lev = h * np.einsum("nq,qr,nr->n", A, np.linalg.inv(info), A)
    return {"eta_hat": eta, "g_hat": g, "h_hat": h, "leverage": lev}


# ---------------------------------------------------------------------------
# Likelihood-ratio triplet scan
# ---------------------------------------------------------------------------

def _lrt_block(xj, XK, resp, family):
    n, m = XK.shape
    Z = xj[:, None] * XK
    XJ = np.broadcast_to(xj[:, None], (n, m))
    if family.name == "gaussian":
        ones = np.ones((n, m))
        full = np.stack([ones, XJ, XK, Z], axis=2)
        null = full[:, :, :3]
        rss = []
        coefs = []
        dep_any = np.zeros(m, dtype=bool)
        for D in (full, null):
            G = np.einsum("nmq,nmr->mqr", D, D)
            b = np.einsum("nmq,n->mq", D, resp)
            coef, _, dep = sweep_solve(G, b)
            r = resp[:, None] - np.einsum("nmq,mq->nm", D, coef)
            rss.append((r * r).sum(axis=0))
            coefs.append(coef)
            dep_any |= dep.any(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = n * np.log(rss[1] / rss[0])
        ok = ~dep_any & np.isfinite(stat)
        return coefs[0][:, 3], stat, ok
    cols = [XJ, XK, Z]
    if family.has_intercept:
        cols = [np.ones((n, m))] + cols
    full = np.stack(cols, axis=2)
    q = full.shape[2]
    null = full[:, :, : q - 1]
    icpt = 0 if family.has_intercept else None
    slopes = list(range(1 if family.has_intercept else 0, q))
    cf, ll_full, ok_f = batched_newton(full, resp, family, icpt, guard_cols=slopes)
    _, ll_null, ok_n = batched_newton(null, resp, family, icpt, guard_cols=slopes[:-1])
    return cf[:, q - 1], 2.0 * (ll_full - ll_null), ok_f & ok_n


def glm_triplet_scan(design: StandardizedDesign, response, family, pairs,
                     threads: int = 0) -> ScanResult:
    """Likelihood-ratio version of the triplet scan.

    p-values are chi-square(1) tails of ``2 (loglik_full - loglik_null)``;
    non-converged, rank-deficient or separated fits are marked degenerate
    with p = 1.
    """
    family = get_family(family)
    resp = family.validate(np.asarray(response, dtype=np.float64))
    if design.n < 10:
        raise ValueError("likelihood-ratio triplet scan needs n >= 10")
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)

    def task(j, ks):
        beta, stat, ok = _lrt_block(design.column(j), design.columns(ks), resp, family)
        stat = np.where(ok, np.maximum(stat, 0.0), 0.0)
        p = np.where(ok, chi2_1_sf(stat), 1.0)
        return np.where(ok, beta, 0.0), np.asarray(p, dtype=np.float64), ~ok

    pairs, cols = run_pair_tasks(pairs, task, threads)
    if cols is None:
        return make_scan_result(np.zeros((0, 2), np.intp), np.zeros(0), np.zeros(0),
                                np.zeros(0, bool))
    beta, p, deg = cols
    return make_scan_result(pairs, beta, p, deg)


def lrt_statistics(design: StandardizedDesign, response, family, pairs):
    """Raw likelihood-ratio statistics (may be slightly negative numerically)."""
    family = get_family(family)
    resp = family.validate(np.asarray(response, dtype=np.float64))
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)

    def task(j, ks):
        _, stat, ok = _lrt_block(design.column(j), design.columns(ks), resp, family)
        return stat, ok

    _, cols = run_pair_tasks(pairs, task, 1)
    return cols
