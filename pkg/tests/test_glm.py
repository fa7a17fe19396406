import math

import numpy as np
import pytest

from oracles import (central_diff_grad, chi2_1_tail_quad, cox_fd_derivatives,
                     logistic_loo_eta, naive_cox_loglik, qr_ols)
from unipairs.core import chi2_1_sf, standardize
from unipairs.glm import (NoEvents, Separation, batched_newton, cox_partial_loglik,
                          get_family, glm_diagnostics, glm_triplet_scan,
                          glm_uni_fit_approx_loo, glm_uni_fit_matrix, lrt_statistics)
from unipairs.tripletscan import eligible_pairs


def test_cox_two_subjects():
    eta = np.array([0.3, -0.8])
    ll, g, h = cox_partial_loglik(eta, np.array([1.0, 2.0]), np.array([1.0, 0.0]))
    assert abs(math.exp(ll) - math.exp(0.3) / (math.exp(0.3) + math.exp(-0.8))) < 1e-14

    def f(e):
        return cox_partial_loglik(e, np.array([1.0, 2.0]), np.array([1.0, 0.0]))[0]

    np.testing.assert_allclose(g, central_diff_grad(f, eta), atol=1e-6)


def test_cox_single_event_at_earliest_time(rng):
    eta = rng.normal(size=7)
    times = np.arange(1.0, 8.0)
    status = np.zeros(7)
    status[0] = 1
    ll, _, _ = cox_partial_loglik(eta, times, status)
    assert abs(ll - (eta[0] - np.log(np.exp(eta).sum()))) < 1e-12


def test_cox_uniform_risk():
    ll, _, _ = cox_partial_loglik(np.full(5, 0.4), np.arange(1.0, 6.0),
                                  np.array([1.0, 0, 0, 0, 0]))
    assert abs(ll + math.log(5)) < 1e-12


@pytest.mark.parametrize("ties", [False, True])
def test_cox_derivatives_against_finite_differences(rng, ties):
    n = 25
    eta = rng.normal(size=n)
    times = rng.integers(1, 8, size=n).astype(float) if ties else rng.exponential(size=n)
    status = (rng.random(n) < 0.7).astype(float)
    status[0] = 1

    def f(e):
        return naive_cox_loglik(e, times, status)

    ll, g, h = cox_partial_loglik(eta, times, status)
    assert abs(ll - f(eta)) < 1e-10
    np.testing.assert_allclose(g, central_diff_grad(f, eta), atol=1e-6)
    g_fd, h_fd = cox_fd_derivatives(eta, times, status)
    np.testing.assert_allclose(g, g_fd, atol=1e-9)
    np.testing.assert_allclose(h, h_fd, atol=1e-9)


def test_cox_requires_events():
    with pytest.raises(NoEvents):
        cox_partial_loglik(np.zeros(3), np.arange(1.0, 4.0), np.zeros(3))
    with pytest.raises(NoEvents):
        get_family("cox").validate(np.column_stack([np.ones(3), np.zeros(3)]))


def test_binomial_newton_matches_oracle(rng):
    x = rng.normal(size=60)
    y = (rng.random(60) < 1 / (1 + np.exp(-(0.5 + x)))).astype(float)
    A = np.column_stack([np.ones(60), x])
    coef, ll, ok = batched_newton(A[:, None, :], y, get_family("binomial"), guard_cols=[1])
    from oracles import logistic_newton
    np.testing.assert_allclose(coef[0], logistic_newton(A, y), atol=1e-8)
    assert ok[0]


def test_binomial_approx_loo_correlates_with_refits():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=30)
        y = (rng.random(30) < 1 / (1 + np.exp(-1.2 * x))).astype(float)
        fit = glm_uni_fit_approx_loo(x, y, "binomial")
        exact = logistic_loo_eta(x, y)
        assert np.corrcoef(fit.loo_eta, exact)[0, 1] > 0.99


def test_approx_loo_correction_formula(rng):
    x = rng.normal(size=40)
    y = (rng.random(40) < 0.5).astype(float)
    fit = glm_uni_fit_approx_loo(x, y, "binomial")
    d = glm_diagnostics(x, y, "binomial")
    expected = d["eta_hat"] - d["g_hat"] * d["leverage"] / (d["h_hat"] * (1 - d["leverage"]))
    np.testing.assert_allclose(fit.loo_eta, expected, atol=1e-12)
    # converged fit: score equations hold, so the corrections cancel on average
    assert abs(d["g_hat"].sum()) < 1e-8
    assert abs(d["g_hat"] @ x) < 1e-8
    assert abs(d["leverage"].sum() - 2.0) < 1e-10


def test_approx_loo_symmetric_data():
    x = np.array([-2.0, -1.0, 1.0, 2.0, -2.0, -1.0, 1.0, 2.0])
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1.0])
    fit = glm_uni_fit_approx_loo(x, y, "binomial")
    assert abs(fit.b1) < 1e-12 and abs(fit.b0) < 1e-12
    # zero slope and intercept: the correction is -g h / (H (1 - h)), antisymmetric in y
    np.testing.assert_allclose(fit.loo_eta[:4], -fit.loo_eta[4:], atol=1e-12)


def test_gaussian_family_uses_exact_loo(rng):
    F = rng.normal(size=(20, 2))
    y = rng.normal(size=20)
    batch = glm_uni_fit_matrix(F, y, "gaussian")
    assert np.all(np.isfinite(batch.loo_b1))


def test_separation_raises():
    x = np.arange(10.0)
    y = (x > 4.5).astype(float)
    with pytest.raises(Separation):
        glm_uni_fit_approx_loo(x, y, "binomial")


def test_chi2_tail_values():
    assert chi2_1_sf(0.0) == 1.0
    assert abs(chi2_1_sf(3.841) - 0.05) < 1e-3
    assert abs(chi2_1_sf(3.841) - chi2_1_tail_quad(3.841)) < 1e-12


def test_gaussian_lrt_matches_qr(rng):
    X = rng.normal(size=(50, 3))
    y = X[:, 0] * X[:, 1] + rng.normal(size=50)
    d = standardize(X)
    pairs = eligible_pairs(3, "none", [])
    stat, ok = lrt_statistics(d, y, "gaussian", pairs)
    for (j, k), s in zip(pairs, stat):
        xj, xk = d.column(j), d.column(k)
        one = np.ones(50)
        _, rss1, _ = qr_ols(np.column_stack([one, xj, xk, xj * xk]), y)
        _, rss0, _ = qr_ols(np.column_stack([one, xj, xk]), y)
        assert abs(s - 50 * np.log(rss0 / rss1)) < 1e-9
    assert ok.all()


def test_binomial_lrt_matches_explicit_fits(rng):
    from oracles import logistic_newton
    X = rng.normal(size=(80, 2))
    y = (rng.random(80) < 1 / (1 + np.exp(-X[:, 0] * X[:, 1]))).astype(float)
    d = standardize(X)
    stat, ok = lrt_statistics(d, y, "binomial", [(0, 1)])
    xj, xk = d.column(0), d.column(1)
    one = np.ones(80)

    def ll(A):
        b = logistic_newton(A, y)
        eta = A @ b
        return np.sum(y * eta - np.logaddexp(0, eta))

    ref = 2 * (ll(np.column_stack([one, xj, xk, xj * xk])) - ll(np.column_stack([one, xj, xk])))
    assert abs(stat[0] - ref) < 1e-7


def test_binomial_scan_finds_interaction():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(500, 6))
        eta = 0.3 + 0.5 * X[:, 2] + 1.5 * X[:, 0] * X[:, 1]
        y = (rng.random(500) < 1 / (1 + np.exp(-eta))).astype(float)
        res = glm_triplet_scan(standardize(X), y, "binomial", eligible_pairs(6, "none", []))
        best = int(np.argmin(res.p_value))
        hits += (res.j[best], res.k[best]) == (0, 1)
    assert hits >= 18


def test_cox_scan_finds_interaction(rng):
    X = rng.normal(size=(300, 4))
    eta = 0.8 * X[:, 0] * X[:, 2]
    t = rng.exponential(size=300) / np.exp(eta)
    status = (rng.random(300) < 0.8).astype(float)
    res = glm_triplet_scan(standardize(X), np.column_stack([t, status]), "cox",
                           eligible_pairs(4, "none", []))
    best = int(np.argmin(res.p_value))
    assert (res.j[best], res.k[best]) == (0, 2)
    assert res.p_value[best] < 1e-6


def test_glm_scan_needs_ten_rows(rng):
    X = rng.normal(size=(8, 3))
    y = np.array([0, 1] * 4, dtype=float)
    with pytest.raises(ValueError):
        glm_triplet_scan(standardize(X), y, "binomial", [(0, 1)])
