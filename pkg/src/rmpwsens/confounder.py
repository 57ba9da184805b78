"""The counterfactual confounder's conditional law and bounds on its correlation.

For a treated unit we observe Z(1) = z but not Z(0). Given prediction models
for Z under each arm and a hypothesised correlation ``rho10`` between the two
residuals, Z(0) | Z(1) = z, X = x has

* continuous Z: a normal law with mean ``mu0 + rho10 * (s0/s1) * (z - mu1)``
  and variance ``(1 - rho10**2) * s0**2``;
* binary Z (latent bivariate probit): a Bernoulli law whose success
  probability follows from the bivariate normal CDF.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from . import kernels
from .data import Dataset
from .errors import (
    InfeasibleBoundsError,
    InvalidArgumentError,
    NumericalDegeneracyError,
)
from .glm import BinaryGlmFit, LinearFit, fit_binary_glm, fit_linear


@dataclass(frozen=True)
class ZModelContinuous:
    fit_arm0: LinearFit
    fit_arm1: LinearFit
    covariates: tuple

    kind = "continuous"

    def __post_init__(self):
        if self.fit_arm0.names != self.fit_arm1.names:
            raise InvalidArgumentError("both arms must use the same covariates")
        if self.sigma0 <= 0 or self.sigma1 <= 0:
            raise NumericalDegeneracyError("a z-model residual scale is zero")

    @property
    def sigma0(self) -> float:
        return self.fit_arm0.residual_sd

    @property
    def sigma1(self) -> float:
        return self.fit_arm1.residual_sd

    def mu(self, arm: int, values) -> np.ndarray:
        fit = self.fit_arm1 if arm == 1 else self.fit_arm0
        return fit.predict(values)


@dataclass(frozen=True)
class ZModelBinary:
    fit_arm0: BinaryGlmFit
    fit_arm1: BinaryGlmFit
    covariates: tuple

    kind = "binary"

    def __post_init__(self):
        if self.fit_arm0.link != "probit" or self.fit_arm1.link != "probit":
            raise InvalidArgumentError("binary z-models must use the probit link")
        if self.fit_arm0.names != self.fit_arm1.names:
            raise InvalidArgumentError("both arms must use the same covariates")

    def mu(self, arm: int, values) -> np.ndarray:
        fit = self.fit_arm1 if arm == 1 else self.fit_arm0
        return fit.linear_predictor(values)


def fit_z_model(data: Dataset, covariates: Sequence[str], kind: str = "continuous",
                dof_corrected: bool = True):
    """Fit the per-arm prediction model for z on the named covariates.

    Continuous z gets a linear fit per arm; binary z a univariate probit per arm.
    """
    data.validate(need_z=True)
    covariates = tuple(covariates)
    fits = []
    for arm in (0, 1):
        rows = np.flatnonzero(data.t == arm)
        design = data.design(covariates, rows=rows)
        if kind == "continuous":
            fits.append(fit_linear(design, data.z[rows], dof_corrected=dof_corrected))
        elif kind == "binary":
            fits.append(fit_binary_glm(design, data.z[rows], link="probit"))
        else:
            raise InvalidArgumentError(f"unknown z kind {kind!r}")
    if kind == "continuous":
        return ZModelContinuous(fits[0], fits[1], covariates)
    return ZModelBinary(fits[0], fits[1], covariates)


@dataclass(frozen=True)
class ConditionalZ0:
    """Law of Z(0) given Z(1) and X; arrays run over units."""

    kind: str
    mean: np.ndarray | None = None
    sd: np.ndarray | None = None
    p1: np.ndarray | None = None


def _as_rows(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _with_intercept(x):
    x = _as_rows(x)
    return np.column_stack([np.ones(x.shape[0]), x])


def _check_rho(rho10, strict=False):
    if not np.isfinite(rho10) or abs(rho10) > 1.0 or (strict and abs(rho10) >= 1.0):
        bound = "(-1, 1)" if strict else "[-1, 1]"
        raise InvalidArgumentError(f"rho10 must lie in {bound}")


def conditional_z0_continuous(model: ZModelContinuous, z1, x, rho10: float) -> ConditionalZ0:
    """Normal law of Z(0) for treated units with observed ``z1`` and covariates ``x``.

    ``x`` holds covariate values without the intercept, one row per unit.
    """
    _check_rho(rho10)
    values = _with_intercept(x)
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    mu0 = model.mu(0, values)
    mu1 = model.mu(1, values)
    s0, s1 = model.sigma0, model.sigma1
    mean = mu0 + rho10 * (s0 / s1) * (z1 - mu1)
    sd = math.sqrt(max(1.0 - rho10 * rho10, 0.0)) * s0
    return ConditionalZ0("normal", mean=mean, sd=np.full(mean.shape, sd))


_CLAMP_SILENT = 1e-8
_CLAMP_WARN = 1e-6


def binary_p1(mu0, mu1, z1, rho10: float) -> np.ndarray:
    """P(Z(0) = 1 | Z(1) = z1) under the latent bivariate probit, from latent means."""
    mu0 = np.asarray(mu0, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    z1 = np.asarray(z1)
    joint = kernels.bvn_cdf(-mu0, -mu1, np.full(np.broadcast(mu0, mu1).shape, rho10))
    den1 = ndtr(mu1)
    den0 = ndtr(-mu1)
    den = np.where(z1 == 1, den1, den0)
    if np.any(den < 1e-12):
        raise NumericalDegeneracyError(
            "conditioning probability underflows; latent mean of Z(1) is extreme"
        )
    raw = np.where(z1 == 1, 1.0 - (ndtr(-mu0) - joint) / den1.clip(1e-300),
                   1.0 - joint / den0.clip(1e-300))
    excursion = np.maximum(-raw, raw - 1.0).max(initial=0.0)
    if excursion > _CLAMP_WARN:
        raise NumericalDegeneracyError(
            f"conditional probability left [0, 1] by {excursion:.2e}"
        )
    if excursion > _CLAMP_SILENT:
        warnings.warn(f"clamping conditional probability excursion of {excursion:.2e}",
                      RuntimeWarning, stacklevel=2)
    return np.clip(raw, 0.0, 1.0)


def conditional_z0_binary(model: ZModelBinary, z1, x, rho10: float) -> ConditionalZ0:
    """Bernoulli law of Z(0); ``rho10`` must be strictly inside (-1, 1)."""
    _check_rho(rho10, strict=True)
    values = _with_intercept(x)
    z1 = np.atleast_1d(np.asarray(z1))
    if not np.all((z1 == 0) | (z1 == 1)):
        raise InvalidArgumentError("binary z1 must be coded 0/1")
    p1 = binary_p1(model.mu(0, values), model.mu(1, values), z1, rho10)
    return ConditionalZ0("bernoulli", p1=p1)


def conditional_z0(model, z1, x, rho10: float) -> ConditionalZ0:
    if model.kind == "continuous":
        return conditional_z0_continuous(model, z1, x, rho10)
    return conditional_z0_binary(model, z1, x, rho10)


@dataclass(frozen=True)
class RhoInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not (-1.0 <= self.lower <= self.upper <= 1.0):
            raise InvalidArgumentError(f"invalid correlation interval [{self.lower}, {self.upper}]")

    def contains(self, rho: float, tol: float = 1e-12) -> bool:
        return self.lower - tol <= rho <= self.upper + tol

    def as_list(self):
        return [self.lower, self.upper]


def rho_bounds(rho_1c: float, rho_0c: float) -> RhoInterval:
    """Range of the Z(1)-Z(0) correlation compatible with both correlations to a covariate C."""
    for r in (rho_1c, rho_0c):
        if not np.isfinite(r) or abs(r) > 1.0:
            raise InvalidArgumentError("correlations must lie in [-1, 1]")
    centre = rho_1c * rho_0c
    half = math.sqrt(max((1.0 - rho_1c**2) * (1.0 - rho_0c**2), 0.0))
    return RhoInterval(max(-1.0, centre - half), min(1.0, centre + half))


def rho_bounds_multi(pairs) -> RhoInterval:
    """Intersection of the intervals from several auxiliary covariates."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidArgumentError("at least one (rho_1c, rho_0c) pair is required")
    ivs = [rho_bounds(a, b) for a, b in pairs]
    lo = max(iv.lower for iv in ivs)
    hi = min(iv.upper for iv in ivs)
    if lo > hi:
        raise InfeasibleBoundsError(
            f"auxiliary intervals do not intersect (max lower {lo:.4f} > min upper {hi:.4f})"
        )
    return RhoInterval(lo, hi)


def rho_grid(interval: RhoInterval, n_points: int) -> np.ndarray:
    if int(n_points) != n_points or n_points < 2:
        raise InvalidArgumentError("a rho grid needs at least 2 points")
    return np.linspace(interval.lower, interval.upper, int(n_points))


def warn_if_outside(rho: float, interval: RhoInterval | None) -> str | None:
    """Warn (and return the message) when a hypothesised rho falls outside ``interval``."""
    if interval is None or interval.contains(rho):
        return None
    msg = (f"rho10 = {rho:.4f} lies outside the auxiliary-covariate bounds "
           f"[{interval.lower:.4f}, {interval.upper:.4f}]")
    warnings.warn(msg, UserWarning, stacklevel=2)
    return msg
