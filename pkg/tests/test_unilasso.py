import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import prox_grad_lasso
from unipairs.solver import LassoProblem, cross_validate
from unipairs.unilasso import prevalidated_predictions, unilasso_fit
from unipairs.univariate import uni_fit_loo_matrix


def test_noiseless_single_column_recovery(rng):
    x = rng.normal(size=40)
    y = 3 + 2 * x
    fit = unilasso_fit(x[:, None], y, k=5, seed=0, ratio=1e-9)
    assert abs(fit.uni_b1[0] - 2) < 1e-12
    np.testing.assert_allclose(fit.loo_eta[:, 0], y, atol=1e-12)
    assert abs(fit.beta_s[0] - 2) < 1e-6
    assert abs(fit.beta0_s - 3) < 1e-6


def test_recombination_identity(rng):
    F = rng.normal(size=(50, 4))
    y = F[:, 0] - F[:, 1] + rng.normal(size=50)
    fit = unilasso_fit(F, y, k=5, seed=1)
    np.testing.assert_allclose(fit.beta_s, fit.theta * fit.uni_b1)
    assert abs(fit.beta0_s - (fit.theta0 + fit.theta @ fit.uni_b0)) < 1e-12
    uni_pred = fit.uni_b0 + fit.uni_b1 * F
    np.testing.assert_allclose(fit.linear_predictor(F), fit.theta0 + uni_pred @ fit.theta,
                               atol=1e-12)


def test_pure_noise_one_se_rule_empty():
    empty = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        fit = unilasso_fit(rng.normal(size=(100, 20)), rng.normal(size=100), seed=seed,
                           rule="1se")
        empty += fit.active.size == 0
    assert empty >= 16


def test_unusable_columns_carry_zeros(rng):
    F = rng.normal(size=(30, 3))
    F[:, 1] = 4.0
    spike = np.zeros(30)
    spike[5] = 1.0
    F[:, 2] = spike
    y = F[:, 0] + 0.1 * rng.normal(size=30)
    fit = unilasso_fit(F, y, k=5, seed=0)
    assert fit.usable.tolist() == [True, False, False]
    assert fit.beta_s[1] == 0 and fit.beta_s[2] == 0


def test_prevalidated_leave_one_out_against_refits():
    rng = np.random.default_rng(7)
    n = 12
    F = rng.normal(size=(n, 3))
    y = 1 + 2 * F[:, 0] + 0.5 * rng.normal(size=n)
    fit = unilasso_fit(F, y, k=n, seed=0, n_lambda=30)
    pv = prevalidated_predictions(fit)
    Z = uni_fit_loo_matrix(F, y).loo_eta
    lam = fit.cv.lambda_best
    for i in range(n):
        keep = np.arange(n) != i
        b0, th = prox_grad_lasso(Z[keep], y[keep], lam, np.ones(3, bool))
        assert abs(pv[i] - (b0 + Z[i] @ th)) < 1e-8


def test_prevalidated_close_to_in_sample_on_strong_signal(rng):
    F = rng.normal(size=(200, 5))
    y = F @ [3.0, 2.0, 0, 0, 1.0] + 0.2 * rng.normal(size=200)
    fit = unilasso_fit(F, y, seed=3)

    def r2(pred):
        return 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)

    assert r2(prevalidated_predictions(fit)) >= r2(fit.linear_predictor(F)) - 0.1


def test_empty_model_prevalidation_is_fold_mean(rng):
    Z = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    prob = LassoProblem(Z, y, nonneg_mask=np.ones(2, bool))
    cv = cross_validate(prob, k=3, seed=4, lambdas=np.array([1e6]))
    for f in range(3):
        test = cv.fold_assignment == f
        np.testing.assert_allclose(cv.prevalidated[test], y[~test].mean(), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_sign_coherence(seed):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(40, 6))
    y = F @ rng.normal(size=6) + rng.normal(size=40)
    fit = unilasso_fit(F, y, k=5, seed=seed, n_lambda=30)
    assert np.all(fit.theta >= 0)
    nz = fit.beta_s != 0
    assert np.all(np.sign(fit.beta_s[nz]) == np.sign(fit.uni_b1[nz]))
