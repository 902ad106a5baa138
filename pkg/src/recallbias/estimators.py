"""Likelihood-based estimation under known under-reporting rates, plus naive comparators.

The observed-data likelihood mixes over the unseen true exposure: each unit
contributes ``Pr(Y=y, Z*=z* | x)`` built from the outcome models ``m0``,
``m1`` and the exposure model ``e`` (see :func:`recallbias.core.joint_observed_prob`).
All three are logistic.  By default the two outcome models share their
covariate slopes and differ by a treatment coefficient; ``separate_outcome``
fits two unrelated coefficient vectors instead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .core import Dataset, RecallBiasSpec, NO_BIAS
from .errors import ConfigError, ConvergenceWarning, PositivityViolation
from .logistic import add_intercept, check_separation, fit_logistic

GRAD_TOL = 1e-6
_LOG_FLOOR = 1e-300

METHODS = ("ml", "prop", "prog", "block", "naive_ipw", "naive_or")


@dataclass(frozen=True)
class ModelSpec:
    """Which covariate columns enter the outcome and exposure models.

    ``None`` means all columns.
    """

    outcome_columns: Optional[Sequence[int]] = None
    exposure_columns: Optional[Sequence[int]] = None
    include_intercept: bool = True
    separate_outcome: bool = False

    def _cols(self, cols, d):
        cols = list(range(d)) if cols is None else list(cols)
        if any(c < 0 or c >= d for c in cols):
            raise ConfigError(f"model column index out of range for d={d}: {cols}")
        return cols

    def exposure_design(self, x: np.ndarray) -> np.ndarray:
        xs = x[:, self._cols(self.exposure_columns, x.shape[1])]
        return add_intercept(xs) if self.include_intercept else xs

    def outcome_design(self, x: np.ndarray) -> np.ndarray:
        """Covariate part of the outcome design (no treatment column)."""
        xs = x[:, self._cols(self.outcome_columns, x.shape[1])]
        return add_intercept(xs) if self.include_intercept else xs

    def treated_design(self, x: np.ndarray, z) -> np.ndarray:
        """Shared-slope outcome design ``[1, z, X]`` (or ``[z, X]`` without intercept)."""
        base = self.outcome_design(x)
        z = np.broadcast_to(np.asarray(z, dtype=float), (len(x),))
        k = 1 if self.include_intercept else 0
        return np.column_stack([base[:, :k], z, base[:, k:]])


@dataclass(frozen=True)
class FittedModels:
    gamma: np.ndarray
    beta: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    models: ModelSpec = field(default_factory=ModelSpec)
    grad_norm: float = float("nan")
    trace: tuple = ()

    def outcome_probs(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fitted ``(m0(x), m1(x))``."""
        if self.models.separate_outcome:
            o = self.models.outcome_design(x)
            p = o.shape[1]
            return expit(o @ self.gamma[:p]), expit(o @ self.gamma[p:])
        return (expit(self.models.treated_design(x, 0.0) @ self.gamma),
                expit(self.models.treated_design(x, 1.0) @ self.gamma))

    def propensity(self, x: np.ndarray) -> np.ndarray:
        return expit(self.models.exposure_design(x) @ self.beta)


@dataclass(frozen=True)
class EstimateResult:
    tau_hat: float
    method: str
    spec: RecallBiasSpec = NO_BIAS
    interval: Optional[tuple] = None
    diagnostics: dict = field(default_factory=dict)

    def with_interval(self, lower: float, upper: float, level: float, **extra) -> "EstimateResult":
        diag = dict(self.diagnostics)
        diag.update(extra)
        return EstimateResult(self.tau_hat, self.method, self.spec, (lower, upper, level), diag)

    def as_dict(self) -> dict:
        out = {"method": self.method, "spec": self.spec.as_dict(), "estimate": self.tau_hat}
        if self.interval is not None:
            lo, hi, level = self.interval
            out["interval"] = {"lower": lo, "upper": hi, "level": level}
        out["diagnostics"] = self.diagnostics
        return out


# -- observed-data likelihood --------------------------------------------------

class JointLikelihood:
    """Log-likelihood of (Y, Z*) given X with analytic gradient and Hessian.

    Parameter vector layout: ``theta = [beta, gamma]``.
    """

    def __init__(self, data: Dataset, spec: RecallBiasSpec, models: ModelSpec):
        self.models = models
        self.y = data.y.astype(float)
        self.zs = data.z_star.astype(float)
        self.eta0, self.eta1 = spec.per_unit(data.n)
        self.E = models.exposure_design(data.x)
        self.pe = self.E.shape[1]
        if models.separate_outcome:
            o = models.outcome_design(data.x)
            zeros = np.zeros_like(o)
            self.D0 = np.hstack([o, zeros])
            self.D1 = np.hstack([zeros, o])
        else:
            self.D0 = models.treated_design(data.x, 0.0)
            self.D1 = models.treated_design(data.x, 1.0)
        self.pg = self.D0.shape[1]
        n = data.n
        # per-unit Jacobians of (u1, u0, v) with respect to theta
        self.J = (
            np.hstack([np.zeros((n, self.pe)), self.D1]),
            np.hstack([np.zeros((n, self.pe)), self.D0]),
            np.hstack([self.E, np.zeros((n, self.pg))]),
        )
        self.n_params = self.pe + self.pg

    def split(self, theta):
        return theta[: self.pe], theta[self.pe:]

    def _parts(self, theta, order=1):
        beta, gamma = self.split(theta)
        m1 = expit(self.D1 @ gamma)
        m0 = expit(self.D0 @ gamma)
        e = expit(self.E @ beta)
        y, zs, h0, h1 = self.y, self.zs, self.eta0, self.eta1
        c1, c0 = 1 - h1, 1 - h0
        s11 = y * zs
        s01 = (1 - y) * zs
        s10 = y * (1 - zs)
        s00 = (1 - y) * (1 - zs)
        P = (s11 * m1 * e * c1 + s01 * (1 - m1) * e * c0
             + s10 * (m1 * e * h1 + m0 * (1 - e))
             + s00 * ((1 - m1) * e * h0 + (1 - m0) * (1 - e)))
        if order == 0:
            return P
        g = np.empty((len(y), 3))
        g[:, 0] = s11 * e * c1 - s01 * e * c0 + s10 * e * h1 - s00 * e * h0
        g[:, 1] = s10 * (1 - e) - s00 * (1 - e)
        g[:, 2] = (s11 * m1 * c1 + s01 * (1 - m1) * c0 + s10 * (m1 * h1 - m0)
                   + s00 * ((1 - m1) * h0 - (1 - m0)))
        q = np.column_stack([m1, m0, e])
        w = q * (1 - q)
        return P, g, q, w, (s11, s01, s10, s00)

    def loglik(self, theta) -> float:
        P = self._parts(theta, order=0)
        return float(np.sum(np.log(np.maximum(P, _LOG_FLOOR))))

    def gradient(self, theta) -> np.ndarray:
        P, g, q, w, _ = self._parts(theta)
        Ps = np.maximum(P, _LOG_FLOOR)
        dr = g / Ps[:, None] * w
        return sum(self.J[j].T @ dr[:, j] for j in range(3))

    def value_and_gradient(self, theta):
        P, g, q, w, _ = self._parts(theta)
        Ps = np.maximum(P, _LOG_FLOOR)
        dr = g / Ps[:, None] * w
        grad = sum(self.J[j].T @ dr[:, j] for j in range(3))
        return float(np.sum(np.log(Ps))), grad

    def hessian(self, theta) -> np.ndarray:
        P, g, q, w, (s11, s01, s10, s00) = self._parts(theta)
        Ps = np.maximum(P, _LOG_FLOOR)
        h0, h1 = self.eta0, self.eta1
        # second derivatives of P in (m1, m0, e); P is multilinear so only cross terms
        hq_m1e = s11 * (1 - h1) - s01 * (1 - h0) + s10 * h1 - s00 * h0
        hq_m0e = -s10 + s00
        gp = g / Ps[:, None]
        H = np.zeros((self.n_params, self.n_params))
        for j in range(3):
            for k in range(j, 3):
                hjk = -gp[:, j] * gp[:, k]
                if (j, k) == (0, 2):
                    hjk = hjk + hq_m1e / Ps
                elif (j, k) == (1, 2):
                    hjk = hjk + hq_m0e / Ps
                hjk = hjk * w[:, j] * w[:, k]
                if j == k:
                    hjk = hjk + gp[:, j] * w[:, j] * (1 - 2 * q[:, j])
                block = self.J[j].T @ (hjk[:, None] * self.J[k])
                H += block if j == k else block + block.T
        return H


def _initial_theta(data: Dataset, models: ModelSpec) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        beta = fit_logistic(models.exposure_design(data.x), data.z_star).coef
        gamma = fit_logistic(models.treated_design(data.x, data.z_star), data.y).coef
    if models.separate_outcome:
        k = 1 if models.include_intercept else 0
        g0 = np.delete(gamma, k)
        g1 = g0.copy()
        if models.include_intercept:
            g1[0] += gamma[k]
        gamma = np.concatenate([g0, g1])
    return np.concatenate([beta, gamma])


def fit_mle(data: Dataset, spec: RecallBiasSpec = NO_BIAS, models: ModelSpec = ModelSpec(),
            max_iter: int = 500, tol: float = GRAD_TOL, theta0=None) -> FittedModels:
    """Maximise the observed-data likelihood by damped Newton ascent.

    Steps use the analytic Hessian, shifted towards steepest ascent when it
    is not negative definite, and an Armijo backtracking line search, so the
    objective never decreases between accepted iterates.  Convergence is
    declared when the max-norm of the gradient drops below ``tol`` or when
    the Newton step's predicted gain falls below the floating-point
    resolution of the log-likelihood.  Otherwise the best iterate is returned
    with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    if data.n == 0:
        raise ConfigError("cannot fit an empty dataset")
    lik = JointLikelihood(data, spec, models)
    theta = _initial_theta(data, models) if theta0 is None else np.array(theta0, dtype=float)
    ll, grad = lik.value_and_gradient(theta)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        H = lik.hessian(theta)
        A = -(H + H.T) / 2
        lam = 0.0
        scale = max(1.0, float(np.max(np.abs(np.diag(A)))))
        while True:
            try:
                L = np.linalg.cholesky(A + lam * np.eye(len(theta)))
                break
            except np.linalg.LinAlgError:
                lam = max(2 * lam, 1e-8 * scale)
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        slope = float(grad @ step)
        if lam == 0.0 and slope < 4 * np.finfo(float).eps * max(1.0, abs(ll)):
            # predicted gain is below the resolution of the log-likelihood
            converged = True
            it -= 1
            break
        t = 1.0
        while True:
            trial = theta + t * step
            ll_trial, g_trial = lik.value_and_gradient(trial)
            if np.isfinite(ll_trial) and ll_trial >= ll + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if not (np.isfinite(ll_trial) and ll_trial >= ll):
            # no ascent possible along this direction: numerically stationary
            break
        theta, ll, grad = trial, ll_trial, g_trial
        trace.append(ll)
    gnorm = float(np.max(np.abs(grad)))
    converged = converged or gnorm < tol
    if not converged:
        warnings.warn(f"likelihood maximisation stopped with gradient max-norm {gnorm:.2e}",
                      ConvergenceWarning, stacklevel=2)
    beta, gamma = lik.split(theta)
    fit = FittedModels(gamma.copy(), beta.copy(), ll, converged, it, models, gnorm, tuple(trace))
    m0, m1 = fit.outcome_probs(data.x)
    check_separation(np.concatenate([m0, m1, fit.propensity(data.x)]))
    return fit


def ate_ml(fit: FittedModels, data: Dataset, spec: RecallBiasSpec = NO_BIAS) -> EstimateResult:
    m0, m1 = fit.outcome_probs(data.x)
    tau = float(np.mean(m1) - np.mean(m0))
    diag = {"converged": fit.converged, "iterations": fit.iterations,
            "loglik": fit.loglik, "grad_norm": fit.grad_norm}
    return EstimateResult(tau, "ml", spec, None, diag)


def naive_or(data: Dataset, models: ModelSpec = ModelSpec()) -> EstimateResult:
    """Logistic regression of Y on (Z*, X) treating Z* as the true exposure."""
    fit = fit_logistic(models.treated_design(data.x, data.z_star), data.y)
    m1 = expit(models.treated_design(data.x, 1.0) @ fit.coef)
    m0 = expit(models.treated_design(data.x, 0.0) @ fit.coef)
    return EstimateResult(float(np.mean(m1) - np.mean(m0)), "naive_or", NO_BIAS, None,
                          {"converged": fit.converged, "gamma_z": float(fit.coef[1 if models.include_intercept else 0])})


def naive_ipw(data: Dataset, models: ModelSpec = ModelSpec(), clip: float = 1e-6) -> EstimateResult:
    """Hajek-normalised inverse probability weighting using Z* as the exposure."""
    fit = fit_logistic(models.exposure_design(data.x), data.z_star)
    e = fit.predict(models.exposure_design(data.x))
    if np.any(e < clip) or np.any(e > 1 - clip):
        raise PositivityViolation("estimated propensity outside [1e-6, 1 - 1e-6]")
    z = data.z_star.astype(float)
    y = data.y.astype(float)
    w1 = z / e
    w0 = (1 - z) / (1 - e)
    if w1.sum() == 0 or w0.sum() == 0:
        raise PositivityViolation("one exposure arm is empty")
    tau = float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))
    return EstimateResult(tau, "naive_ipw", NO_BIAS, None, {"converged": fit.converged})
