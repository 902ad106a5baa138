"""Small Newton-Raphson logistic regression used for all standard (unadjusted) fits."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConvergenceWarning, SeparationWarning

PIN_TOL = 1e-10


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    loglik: float
    converged: bool
    iterations: int

    def predict(self, design: np.ndarray) -> np.ndarray:
        return expit(design @ self.coef)


def add_intercept(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(x)), x])


def log_likelihood(coef, design, y) -> float:
    eta = design @ coef
    # log(1 + exp(eta)) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def check_separation(p: np.ndarray, what: str = "fitted probability") -> None:
    if np.any(p < PIN_TOL) or np.any(p > 1 - PIN_TOL):
        warnings.warn(f"{what} pinned to 0 or 1; the data may be separated",
                      SeparationWarning, stacklevel=3)


def fit_logistic(design: np.ndarray, y: np.ndarray, tol: float = 1e-9,
                 max_iter: int = 100, ridge: float = 0.0) -> LogisticFit:
    """Maximum-likelihood logistic regression by damped Newton steps.

    Converges when the max-norm of the score falls below ``tol``.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    coef = np.zeros(p)
    ll = log_likelihood(coef, design, y) - 0.5 * ridge * coef @ coef
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(design @ coef)
        grad = design.T @ (y - mu) - ridge * coef
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        w = mu * (1 - mu)
        hess = (design * w[:, None]).T @ design + ridge * np.eye(p)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            trial = coef + t * step
            ll_trial = log_likelihood(trial, design, y) - 0.5 * ridge * trial @ trial
            if ll_trial >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        coef, ll = trial, ll_trial
    else:
        mu = expit(design @ coef)
        converged = bool(np.max(np.abs(design.T @ (y - mu) - ridge * coef)) < tol)
    if not converged:
        warnings.warn("logistic fit did not converge", ConvergenceWarning, stacklevel=2)
    check_separation(expit(design @ coef))
    return LogisticFit(coef, float(ll), converged, it)
