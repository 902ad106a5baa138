import warnings

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from recallbias.core import NO_BIAS, Dataset, RecallBiasSpec
from recallbias.errors import PositivityViolation, SeparationWarning
from recallbias.estimators import (
    FittedModels,
    JointLikelihood,
    ModelSpec,
    ate_ml,
    fit_mle,
    naive_ipw,
    naive_or,
)
from recallbias.logistic import add_intercept, fit_logistic, log_likelihood
from recallbias.simulation import generate_dataset, true_ate


def _scipy_logit(design, y):
    # independent oracle: quasi-Newton on the negative log-likelihood
    def f(b):
        eta = design @ b
        return -np.sum(y * eta - np.logaddexp(0, eta)), -design.T @ (y - expit(eta))

    return minimize(f, np.zeros(design.shape[1]), jac=True, method="BFGS",
                    options={"gtol": 1e-10, "maxiter": 10_000}).x


def test_fit_logistic_matches_quasi_newton(rng):
    x = rng.standard_normal((800, 3))
    y = (rng.random(800) < expit(0.3 + x @ [0.5, -1.0, 0.2])).astype(float)
    design = add_intercept(x)
    fit = fit_logistic(design, y)
    assert fit.converged
    np.testing.assert_allclose(fit.coef, _scipy_logit(design, y), atol=1e-6)
    assert fit.loglik == pytest.approx(log_likelihood(fit.coef, design, y))


def test_fit_logistic_warns_on_separation():
    x = np.linspace(-1, 1, 40)[:, None]
    y = (x[:, 0] > 0).astype(float)
    with pytest.warns(SeparationWarning):
        fit_logistic(add_intercept(x), y, max_iter=60)


def test_gradient_and_hessian_match_finite_differences(sim_data, spec12, rng):
    lik = JointLikelihood(sim_data, spec12, ModelSpec())
    theta = rng.normal(0, 0.3, 11)
    h = 1e-6
    num = np.array([(lik.loglik(theta + h * e) - lik.loglik(theta - h * e)) / (2 * h)
                    for e in np.eye(11)])
    np.testing.assert_allclose(lik.gradient(theta), num, rtol=1e-5, atol=1e-4)
    hnum = np.array([(lik.gradient(theta + h * e) - lik.gradient(theta - h * e)) / (2 * h)
                     for e in np.eye(11)])
    np.testing.assert_allclose(lik.hessian(theta), hnum, rtol=1e-4, atol=1e-2)


def test_mle_without_bias_factorizes(sim_data):
    # at eta = 0 the likelihood splits into two ordinary logistic fits
    fit = fit_mle(sim_data, NO_BIAS)
    models = ModelSpec()
    beta = fit_logistic(models.exposure_design(sim_data.x), sim_data.z_star).coef
    gamma = fit_logistic(models.treated_design(sim_data.x, sim_data.z_star), sim_data.y).coef
    np.testing.assert_allclose(fit.beta, beta, atol=1e-6)
    np.testing.assert_allclose(fit.gamma, gamma, atol=1e-6)
    assert ate_ml(fit, sim_data).tau_hat == pytest.approx(naive_or(sim_data).tau_hat, abs=1e-6)


def test_mle_trace_is_monotone(sim_data, spec12):
    fit = fit_mle(sim_data, spec12)
    assert fit.converged
    assert np.all(np.diff(fit.trace) >= -1e-9)


def test_mle_recovers_effect_at_scale(spec12):
    d = generate_dataset("cor_cor", 20_000, spec12, seed=2)
    tau = ate_ml(fit_mle(d, spec12), d, spec12).tau_hat
    assert abs(tau - true_ate("cor_cor")) < 0.02


def test_mle_constant_propensity(rng):
    n = 20_000
    x = rng.standard_normal((n, 1))
    z = rng.random(n) < 0.5
    y = rng.random(n) < expit(-0.2 + 0.6 * z + 0.4 * x[:, 0])
    d = Dataset(x, y.astype(int), z.astype(int), ("x",))
    fit = fit_mle(d, NO_BIAS)
    # Monte Carlo SE of the slope is about 2/sqrt(n * var(x)) ~ 0.014
    assert abs(fit.beta[1]) < 3 * 2 / np.sqrt(n)


def test_ate_ml_zero_treatment_coefficient(small_data):
    fit = FittedModels(gamma=np.array([0.1, 0.0, 0.3, -0.2, 0.4, 0.1]), beta=np.zeros(5),
                       loglik=0.0, converged=True, iterations=0)
    assert ate_ml(fit, small_data).tau_hat == 0.0
    fit = FittedModels(gamma=np.array([0.1, 3.0, 0.3, -0.2, 0.4, 0.1]), beta=np.zeros(5),
                       loglik=0.0, converged=True, iterations=0)
    assert ate_ml(fit, small_data).tau_hat > 0


def test_naive_estimators_consistent_without_bias():
    d = generate_dataset("cor_cor", 20_000, NO_BIAS, seed=4)
    truth = true_ate("cor_cor")
    assert abs(naive_ipw(d).tau_hat - truth) < 0.015
    assert abs(naive_or(d).tau_hat - truth) < 0.015


def test_naive_ipw_constant_outcome(small_data):
    d = Dataset(small_data.x, np.ones(small_data.n, int), small_data.z_star, small_data.covariate_names)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        assert naive_ipw(d).tau_hat == pytest.approx(0.0, abs=1e-15)


def test_naive_ipw_positivity():
    x = np.linspace(-1, 1, 60)[:, None]
    zs = (x[:, 0] > 0).astype(int)
    d = Dataset(x, np.tile([0, 1], 30), zs, ("x",))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(PositivityViolation):
            naive_ipw(d)


def test_naive_is_biased_under_differential_recall(spec12):
    d = generate_dataset("cor_cor", 20_000, spec12, seed=8)
    assert true_ate("cor_cor") - naive_ipw(d).tau_hat > 0.03


def test_model_spec_columns(small_data):
    m = ModelSpec(outcome_columns=[0, 2], exposure_columns=[1])
    assert m.exposure_design(small_data.x).shape == (small_data.n, 2)
    assert m.treated_design(small_data.x, 1).shape == (small_data.n, 4)
    fit = fit_mle(small_data, RecallBiasSpec(0.1, 0.2), m)
    assert fit.gamma.shape == (4,) and fit.beta.shape == (2,)
