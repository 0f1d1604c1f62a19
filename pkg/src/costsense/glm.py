"""Log-link estimating-equation fits with robust covariance.

Two response families are supported. ``LOG_GAMMA`` fits a multiplicative
mean model for nonnegative outcomes by solving the weighted quasi-score
equations

    sum_i w_i (y_i / mu_i - 1) x_i = 0,    mu_i = exp(x_i' b),

the score of a log-link model whose variance grows as the square of the
mean (constant coefficient of variation), the usual shape for
right-skewed cost data. ``LOGIT_BINOMIAL`` is ordinary logistic
regression. Both are solved by Fisher scoring with step halving on the
working deviance.

Robust (sandwich) covariance is the default variance estimate; a
model-based covariance is also attached to every fit. All reductions run
over a canonical row ordering, so permuting input records reproduces
results bit for bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, xlogy

from .errors import EmptyFitError, SingularDesignError

_ETA_MAX = 700.0  # exp overflows just above this
_MAX_HALVINGS = 10


class Family(enum.Enum):
    LOG_GAMMA = "log-gamma"
    LOGIT_BINOMIAL = "logit-binomial"


@dataclass
class DesignSpec:
    """A regression problem: response, design matrix, weights, family."""

    response: np.ndarray
    design: np.ndarray
    weights: np.ndarray
    family: Family

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=np.float64)
        self.design = np.atleast_2d(np.asarray(self.design, dtype=np.float64))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = self.response.shape[0]
        if self.design.shape[0] != n or self.weights.shape != (n,):
            raise ValueError("response, design and weights must share one length")
        if not np.all(np.isfinite(self.design)):
            raise ValueError("design matrix must be finite")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        if self.family is Family.LOG_GAMMA:
            if np.any(self.response < 0) or not np.all(np.isfinite(self.response)):
                raise ValueError("log-gamma responses must be finite and nonnegative")
        elif np.any((self.response < 0) | (self.response > 1)):
            raise ValueError("logit-binomial responses must lie in [0, 1]")


@dataclass
class FitResult:
    """Fitted coefficients plus both covariance estimates.

    ``covariance`` is the robust sandwich matrix; ``model_covariance`` is
    the model-based analogue. Both are NaN-filled when the fit did not
    converge. ``n_effective`` counts records with positive weight.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    model_covariance: np.ndarray
    converged: bool
    iterations: int
    n_effective: int

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def _canonical_order(response, design, weights) -> np.ndarray:
    # Lexicographic row order (response first) fixes the summation order,
    # making every reduction invariant to input permutation.
    keys = [weights] + [design[:, j] for j in range(design.shape[1] - 1, -1, -1)]
    keys.append(response)
    return np.lexsort(tuple(keys))


def _family_terms(family: Family, eta: np.ndarray, y: np.ndarray):
    """Mean, score residual, and information weight at linear predictor eta."""
    if family is Family.LOG_GAMMA:
        mu = np.exp(eta)
        return mu, y / mu - 1.0, np.ones_like(mu)
    p = expit(eta)
    return p, y - p, p * (1.0 - p)


def _deviance(family: Family, y, mu, w) -> float:
    if family is Family.LOG_GAMMA:
        # Negative quasi-likelihood for variance ~ mu^2, up to a constant
        # in y; convex in the coefficients and finite at y = 0.
        with np.errstate(divide="ignore", over="ignore"):
            return 2.0 * float(np.sum(w * (y / mu + np.log(mu))))
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)
    return -2.0 * float(np.sum(w * ll))


def _initial_coefficients(spec: DesignSpec, y, w) -> np.ndarray:
    b = np.zeros(spec.design.shape[1])
    if spec.family is Family.LOG_GAMMA:
        mean_y = float(np.sum(w * y) / np.sum(w))
        if mean_y <= 0:
            raise EmptyFitError("response is identically zero on the weighted support")
        b[0] = np.log(mean_y)
    return b


def irls_fit(
    spec: DesignSpec, tolerance: float = 1e-8, max_iterations: int = 100
) -> FitResult:
    """Solve the weighted score equations of ``spec`` by Newton iteration.

    The iteration starts from a log-mean intercept (``LOG_GAMMA``) or zeros
    (``LOGIT_BINOMIAL``) and stops when the largest relative coefficient
    change falls below ``tolerance``. A step that increases the deviance is
    halved up to ten times. Non-finite coefficients or a linear predictor
    beyond the exp-overflow guard end the fit with ``converged=False``.

    Raises
    ------
    EmptyFitError
        No record carries positive weight.
    SingularDesignError
        The design is rank deficient on the positively weighted rows.
    """
    order = _canonical_order(spec.response, spec.design, spec.weights)
    y = spec.response[order]
    X = np.ascontiguousarray(spec.design[order])
    w = spec.weights[order]

    pos = w > 0
    n_eff = int(np.count_nonzero(pos))
    p = X.shape[1]
    if n_eff == 0:
        raise EmptyFitError("all weights are zero")
    if n_eff < p or np.linalg.matrix_rank(X[pos]) < p:
        raise SingularDesignError(
            "design is rank deficient on the positively weighted records"
        )

    b = _initial_coefficients(spec, y, w)
    eta = X @ b
    mu, resid, info = _family_terms(spec.family, eta, y)
    dev = _deviance(spec.family, y, mu, w)

    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        score = X.T @ (w * resid)
        bread = (X * (w * info)[:, None]).T @ X
        try:
            step = np.linalg.solve(bread, score)
        except np.linalg.LinAlgError:
            raise SingularDesignError("normal equations are singular") from None

        # Step halving: if the full Newton step worsens the deviance, retreat
        # up to ten times, then accept whatever remains.
        b_new = b + step
        for _ in range(_MAX_HALVINGS + 1):
            eta_new = X @ b_new
            if np.all(np.isfinite(b_new)) and np.max(np.abs(eta_new)) <= _ETA_MAX:
                mu_new, _, _ = _family_terms(spec.family, eta_new, y)
                dev_new = _deviance(spec.family, y, mu_new, w)
                if np.isfinite(dev_new) and dev_new <= dev + 1e-10 * (1.0 + abs(dev)):
                    break
            step = step / 2.0
            b_new = b + step

        eta_new = X @ b_new
        if not np.all(np.isfinite(b_new)) or np.max(np.abs(eta_new)) > _ETA_MAX:
            return _finish(spec, b, converged=False, iterations=iterations, n_eff=n_eff)

        rel_change = float(np.max(np.abs(b_new - b) / np.maximum(1.0, np.abs(b_new))))
        b = b_new
        eta = eta_new
        mu, resid, info = _family_terms(spec.family, eta, y)
        dev = _deviance(spec.family, y, mu, w)
        if not np.isfinite(dev):
            return _finish(spec, b, converged=False, iterations=iterations, n_eff=n_eff)
        if rel_change <= tolerance:
            converged = True
            break

    return _finish(spec, b, converged=converged, iterations=iterations, n_eff=n_eff)


def _finish(spec, b, converged, iterations, n_eff) -> FitResult:
    p = b.shape[0]
    if converged:
        covariance = sandwich_covariance(spec, b)
        model_cov = model_covariance(spec, b)
    else:
        covariance = np.full((p, p), np.nan)
        model_cov = np.full((p, p), np.nan)
    return FitResult(
        coefficients=b,
        covariance=covariance,
        model_covariance=model_cov,
        converged=converged,
        iterations=iterations,
        n_effective=n_eff,
    )


def score_matrices(spec: DesignSpec, coefficients: np.ndarray):
    """Return ``(bread, meat)`` evaluated at ``coefficients``.

    Bread is the derivative of the score; meat is the sum of outer products
    of the per-record weighted scores.
    """
    order = _canonical_order(spec.response, spec.design, spec.weights)
    y = spec.response[order]
    X = np.ascontiguousarray(spec.design[order])
    w = spec.weights[order]
    eta = X @ np.asarray(coefficients, dtype=np.float64)
    _, resid, info = _family_terms(spec.family, eta, y)
    bread = (X * (w * info)[:, None]).T @ X
    scores = X * (w * resid)[:, None]
    meat = scores.T @ scores
    return bread, meat


def sandwich_covariance(spec: DesignSpec, coefficients: np.ndarray) -> np.ndarray:
    """Robust covariance ``A^{-1} B A^{-T}`` for the fitted coefficients."""
    bread, meat = score_matrices(spec, coefficients)
    try:
        inner = np.linalg.solve(bread, meat)
        cov = np.linalg.solve(bread, inner.T).T
    except np.linalg.LinAlgError:
        raise SingularDesignError("bread matrix is singular") from None
    return (cov + cov.T) / 2.0


def model_covariance(spec: DesignSpec, coefficients: np.ndarray) -> np.ndarray:
    """Model-based covariance: inverse bread, with a moment dispersion
    estimate for the ``LOG_GAMMA`` family."""
    order = _canonical_order(spec.response, spec.design, spec.weights)
    y = spec.response[order]
    X = np.ascontiguousarray(spec.design[order])
    w = spec.weights[order]
    eta = X @ np.asarray(coefficients, dtype=np.float64)
    _, resid, info = _family_terms(spec.family, eta, y)
    bread = (X * (w * info)[:, None]).T @ X
    try:
        inv = np.linalg.inv(bread)
    except np.linalg.LinAlgError:
        raise SingularDesignError("bread matrix is singular") from None

    if spec.family is Family.LOG_GAMMA:
        pos = w > 0
        n_eff = int(np.count_nonzero(pos))
        p = X.shape[1]
        if n_eff > p:
            pearson = float(np.sum(w * resid**2)) / (n_eff - p)
        else:
            pearson = np.nan
        inv = inv * pearson
    return (inv + inv.T) / 2.0
