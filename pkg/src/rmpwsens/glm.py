"""Model fitting on dense design matrices.

Ordinary least squares, logit/probit maximum likelihood by safeguarded
Newton iterations, bivariate probit maximum likelihood and within-design
partial correlations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import expit, log_ndtr, ndtr

from . import kernels
from .errors import (
    ConvergenceError,
    DegenerateVarianceError,
    InvalidArgumentError,
    SeparationError,
    SingularDesignError,
)

MAX_ITER = 100
MAX_HALVINGS = 30
SEPARATION_LIMIT = 30.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    names: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidArgumentError("design values must be two-dimensional")
        if v.shape[1] != len(self.names):
            raise InvalidArgumentError("one name per design column is required")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("design contains non-finite entries")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_columns(cls, columns, names: Sequence[str] | None = None, intercept: bool = True):
        """Build ``[1, c_1, ..., c_p]`` from 1-d arrays.

        ``columns`` may be a mapping name -> array or a sequence of arrays
        (then ``names`` is required).
        """
        if hasattr(columns, "items"):
            names = list(columns.keys())
            cols = [np.asarray(columns[k], dtype=float) for k in names]
        else:
            cols = [np.asarray(c, dtype=float) for c in columns]
            names = list(names or [f"x{i}" for i in range(len(cols))])
        if intercept:
            n = len(cols[0]) if cols else None
            if n is None:
                raise InvalidArgumentError("intercept-only design needs an explicit row count")
            cols = [np.ones(n)] + cols
            names = ["(intercept)"] + names
        return cls(np.column_stack(cols), tuple(names))

    @classmethod
    def intercept_only(cls, n: int):
        return cls(np.ones((n, 1)), ("(intercept)",))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def has_intercept(self) -> bool:
        return bool(self.names) and self.names[0] == "(intercept)"

    def take(self, rows) -> "DesignMatrix":
        return DesignMatrix(self.values[rows], self.names)


def check_full_rank(design: DesignMatrix, tol: float = 1e-10) -> None:
    """Raise SingularDesignError naming the first column spanned by earlier ones."""
    X = design.values
    n, p = X.shape
    if n < p:
        raise SingularDesignError(design.names[min(n, p - 1)])
    _, r = np.linalg.qr(X, mode="reduced")
    norms = np.linalg.norm(X, axis=0)
    for j in range(p):
        if norms[j] == 0.0 or abs(r[j, j]) <= tol * norms[j]:
            raise SingularDesignError(design.names[j])


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    residual_sd: float
    names: tuple
    dof_corrected: bool = True

    def predict(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) @ self.coefficients


def fit_linear(design: DesignMatrix, response, dof_corrected: bool = True) -> LinearFit:
    """Least squares via a reduced QR factorisation.

    ``residual_sd`` uses the ``n - p`` denominator unless ``dof_corrected`` is
    false, in which case the maximum-likelihood ``n`` denominator is used.
    """
    y = np.asarray(response, dtype=float)
    X = design.values
    if y.shape != (X.shape[0],):
        raise InvalidArgumentError("response length must match design rows")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("response contains non-finite entries")
    check_full_rank(design)
    n, p = X.shape
    q, r = np.linalg.qr(X, mode="reduced")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    denom = n - p if dof_corrected else n
    if denom <= 0:
        raise InvalidArgumentError("need more rows than columns for a residual scale")
    sd = math.sqrt(float(resid @ resid) / denom)
    return LinearFit(beta, resid, sd, design.names, dof_corrected)


@dataclass(frozen=True)
class BinaryGlmFit:
    link: str
    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    names: tuple = field(default=())

    def linear_predictor(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) @ self.coefficients

    def predict(self, values) -> np.ndarray:
        return inverse_link(self.linear_predictor(values), self.link)


_P_LO = np.finfo(float).tiny
_P_HI = 1.0 - np.finfo(float).epsneg


def inverse_link(eta, link: str):
    if link == "logit":
        p = expit(eta)
    elif link == "probit":
        p = ndtr(eta)
    else:
        raise InvalidArgumentError(f"unknown link {link!r}")
    return np.clip(p, _P_LO, _P_HI)


def predict_prob(fit: BinaryGlmFit, covariates) -> float:
    """Fitted probability for one full design row (intercept entry included)."""
    row = np.asarray(covariates, dtype=float)
    if row.shape != fit.coefficients.shape:
        raise InvalidArgumentError(
            f"expected {fit.coefficients.size} design entries, got {row.size}"
        )
    return float(inverse_link(row @ fit.coefficients, fit.link))


def _loglik_terms(X, y, beta, link):
    """Log-likelihood, score and negative Hessian at ``beta``."""
    eta = X @ beta
    if link == "logit":
        ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        p = expit(eta)
        g = X.T @ (y - p)
        w = p * (1.0 - p)
    else:
        q = 2.0 * y - 1.0
        qe = q * eta
        ll = float(np.sum(log_ndtr(qe)))
        # inverse Mills ratio phi(qe)/Phi(qe), stable in both tails
        lam = np.exp(-0.5 * qe * qe - 0.5 * _LOG_2PI - log_ndtr(qe))
        g = X.T @ (q * lam)
        w = lam * (lam + qe)
    h = X.T @ (w[:, None] * X)
    return ll, g, h


def _standardised_extremes(X, beta):
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    varying = sds > 0
    slopes = beta[varying] * sds[varying]
    const = float(beta[~varying].sum() + np.dot(beta[varying], means[varying]))
    return max([abs(const)] + list(np.abs(slopes)))


def fit_binary_glm(
    design: DesignMatrix,
    response,
    link: str = "logit",
    ridge: float = 0.0,
    max_iter: int = MAX_ITER,
) -> BinaryGlmFit:
    """Maximum likelihood for a binary regression with logit or probit link.

    Newton iterations with up to 30 step halvings per iteration. Converged
    means the relative log-likelihood change fell below 1e-10 and the score
    max-norm below 1e-8. ``ridge`` adds ``ridge/2 * ||beta||^2`` (intercept
    excluded) to the objective; it is off by default.

    Raises SeparationError when standardised coefficients exceed 30 in
    absolute value, which is where (quasi-)complete separation sends them.
    """
    if link not in ("logit", "probit"):
        raise InvalidArgumentError(f"unknown link {link!r}")
    y = np.asarray(response, dtype=float)
    X = design.values
    if y.shape != (X.shape[0],):
        raise InvalidArgumentError("response length must match design rows")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("binary response must be coded 0/1")
    if y.min() == y.max():
        raise InvalidArgumentError("binary response contains a single class")
    check_full_rank(design)

    pen = np.full(X.shape[1], float(ridge))
    if design.has_intercept:
        pen[0] = 0.0

    def objective(b):
        ll, g, h = _loglik_terms(X, y, b, link)
        return ll - 0.5 * float(np.sum(pen * b * b)), g - pen * b, h + np.diag(pen)

    beta = np.zeros(X.shape[1])
    ll, g, h = objective(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + t * step
            ll_new, g_new, h_new = objective(cand)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            break
        rel = abs(ll_new - ll) / max(abs(ll), 1e-300)
        beta, ll, g, h = cand, ll_new, g_new, h_new
        if _standardised_extremes(X, beta) > SEPARATION_LIMIT:
            raise SeparationError(
                "coefficients diverge (complete or quasi-complete separation)"
            )
        if rel < 1e-10 and np.max(np.abs(g)) < 1e-8:
            converged = True
            break
    if not converged and np.max(np.abs(g)) < 1e-8:
        converged = True
    return BinaryGlmFit(link, beta, converged, it, ll, design.names)


# ---------------------------------------------------------------------------
# bivariate probit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BivariateProbitFit:
    coefficients_1: np.ndarray
    coefficients_2: np.ndarray
    rho: float
    log_likelihood: float
    converged: bool
    gradient_norm: float
    names: tuple = field(default=())


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _bvp_loglik(params, X, q1, q2, fixed_rho):
    p = X.shape[1]
    b1, b2 = params[:p], params[p : 2 * p]
    if fixed_rho is None:
        theta = params[2 * p]
        rho = math.tanh(theta)
    else:
        rho = fixed_rho
    w1 = q1 * (X @ b1)
    w2 = q2 * (X @ b2)
    rs = q1 * q2 * rho
    prob = np.maximum(kernels.bvn_cdf(w1, w2, rs), 1e-300)
    ll = float(np.sum(np.log(prob)))
    s = math.sqrt(max(1.0 - rho * rho, 1e-300))
    d1 = _phi(w1) * ndtr((w2 - rs * w1) / s)
    d2 = _phi(w2) * ndtr((w1 - rs * w2) / s)
    g1 = X.T @ (q1 * d1 / prob)
    g2 = X.T @ (q2 * d2 / prob)
    parts = [g1, g2]
    if fixed_rho is None:
        dens = np.exp(-(w1 * w1 - 2.0 * rs * w1 * w2 + w2 * w2) / (2.0 * s * s)) / (
            2.0 * math.pi * s
        )
        grho = float(np.sum(q1 * q2 * dens / prob))
        parts.append(np.array([grho * (1.0 - rho * rho)]))
    return ll, np.concatenate(parts), rho


def fit_bivariate_probit(
    design: DesignMatrix, response_1, response_2, fixed_rho: float | None = None
) -> BivariateProbitFit:
    """Bivariate probit by quasi-Newton (BFGS) on ``(beta_1, beta_2, arctanh rho)``.

    Starting values are the two univariate probit fits and rho = 0. With
    ``fixed_rho`` the correlation is held fixed and only the margins move.
    """
    y1 = np.asarray(response_1, dtype=float)
    y2 = np.asarray(response_2, dtype=float)
    X = design.values
    for y in (y1, y2):
        if y.shape != (X.shape[0],):
            raise InvalidArgumentError("response length must match design rows")
    if np.all(y1 == y2) or np.all(y1 != y2):
        raise SeparationError("responses coincide (or are complements); rho is at the boundary")
    f1 = fit_binary_glm(design, y1, "probit")
    f2 = fit_binary_glm(design, y2, "probit")
    q1, q2 = 2.0 * y1 - 1.0, 2.0 * y2 - 1.0
    start = [f1.coefficients, f2.coefficients]
    if fixed_rho is None:
        start.append(np.array([0.0]))
    x0 = np.concatenate(start)

    def negll(params):
        ll, g, _ = _bvp_loglik(params, X, q1, q2, fixed_rho)
        return -ll, -g

    res = optimize.minimize(
        negll, x0, jac=True, method="BFGS", options={"gtol": 1e-9, "maxiter": 2000}
    )
    ll, g, rho = _bvp_loglik(res.x, X, q1, q2, fixed_rho)
    gnorm = float(np.max(np.abs(g)))
    if gnorm > 1e-6:
        # BFGS can stall on line-search precision; finish with Newton on a
        # finite-difference Hessian of the analytic gradient
        x = res.x.copy()
        for _ in range(20):
            hess = _fd_hessian(lambda v: _bvp_loglik(v, X, q1, q2, fixed_rho)[1], x)
            try:
                x = x - np.linalg.solve(hess, g)
            except np.linalg.LinAlgError:
                break
            ll, g, rho = _bvp_loglik(x, X, q1, q2, fixed_rho)
            gnorm = float(np.max(np.abs(g)))
            if gnorm <= 1e-8:
                break
        res.x = x
    p = X.shape[1]
    if fixed_rho is None and abs(rho) > 1.0 - 1e-6:
        raise SeparationError("estimated correlation reached the boundary")
    if gnorm > 1e-6:
        raise ConvergenceError(
            f"bivariate probit did not converge (gradient {gnorm:.2e})", last_iterate=res.x
        )
    return BivariateProbitFit(res.x[:p], res.x[p : 2 * p], rho, ll, True, gnorm, design.names)


def _fd_hessian(grad, x, eps=1e-5):
    n = x.size
    h = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        h[:, j] = (grad(x + e) - grad(x - e)) / (2.0 * eps)
    return 0.5 * (h + h.T)


def partial_correlation(z, c, design: DesignMatrix) -> float:
    """Correlation of the residuals of ``z`` and ``c`` after regressing both on ``design``."""
    z = np.asarray(z, dtype=float)
    c = np.asarray(c, dtype=float)
    if z.shape != (design.n_rows,) or c.shape != (design.n_rows,):
        raise InvalidArgumentError("vectors must have one entry per design row")
    rz = fit_linear(design, z).residuals
    rc = fit_linear(design, c).residuals
    for name, r, v in (("z", rz, z), ("c", rc, c)):
        scale = max(float(np.linalg.norm(v)), 1.0)
        if float(np.linalg.norm(r)) <= 1e-9 * scale:
            raise DegenerateVarianceError(f"{name} has no residual variation given the design")
    r = float(np.clip(np.dot(rz, rc) / (np.linalg.norm(rz) * np.linalg.norm(rc)), -1.0, 1.0))
    return r
