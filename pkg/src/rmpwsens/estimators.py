"""Ratio-of-mediator-probability weighting (RMPW) estimators of NIE and NDE.

Every estimator reweights the treated arm so that its mediator distribution
mimics the one it would have had under control, then reads

    NIE = ybar_1 - weighted ybar_1,    NDE = weighted ybar_1 - ybar_0,

with the weighted mean normalised by the sum of weights. The estimators
differ only in the numerator propensity of the weight:

``naive``        control-arm mediator model on x alone (z ignored)
``oracle``       control-arm model evaluated at the true Z(0) (simulation)
``imputation``   evaluated at draws from the conditional law of Z(0)
``integration``  averaged over that law (Gauss-Hermite / two-point sum)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .confounder import ConditionalZ0, conditional_z0, fit_z_model
from .data import Dataset
from .errors import (
    BootstrapInstabilityError,
    DegeneratePropensityError,
    InvalidArgumentError,
    RmpwError,
)
from .glm import BinaryGlmFit, fit_binary_glm
from .numerics import RngStream, gauss_hermite_rule, std_normal_quantile

METHODS = ("naive", "oracle", "imputation", "integration")
_DEGENERATE = 1e-12


@dataclass(frozen=True)
class MediatorModels:
    arm0: BinaryGlmFit
    arm1: BinaryGlmFit
    includes_z: bool
    covariates: tuple

    def linear_predictor(self, arm: int, data: Dataset, rows, z_values=None) -> np.ndarray:
        fit = self.arm1 if arm == 1 else self.arm0
        design = data.design(self.covariates, rows=rows, include_z=self.includes_z,
                             z_values=z_values)
        return design.values @ fit.coefficients

    def z_coefficient(self, arm: int) -> float:
        if not self.includes_z:
            return 0.0
        fit = self.arm1 if arm == 1 else self.arm0
        return float(fit.coefficients[1])


def fit_mediator_models(data: Dataset, include_z: bool, covariates: Sequence[str],
                        link: str = "logit") -> MediatorModels:
    """One mediator propensity model per treatment arm, on ``[1, (z,) covariates]``."""
    data.validate(need_z=include_z)
    covariates = tuple(covariates)
    fits = []
    for arm in (0, 1):
        rows = np.flatnonzero(data.t == arm)
        design = data.design(covariates, rows=rows, include_z=include_z)
        fits.append(fit_binary_glm(design, data.m[rows], link=link))
    return MediatorModels(fits[0], fits[1], include_z, covariates)


def _expit(eta):
    return 1.0 / (1.0 + np.exp(-eta))


def rmpw_weight(m, p_numerator_m1, p_denominator_m1):
    """Ratio of the probabilities of the observed mediator value.

    Probabilities are those of ``m = 1`` under the numerator (counterfactual)
    and denominator (actual) models. Vectorised.
    """
    m = np.asarray(m)
    pn = np.asarray(p_numerator_m1, dtype=float)
    pd = np.asarray(p_denominator_m1, dtype=float)
    for p in (pn, pd):
        if np.any((p < _DEGENERATE) | (p > 1.0 - _DEGENERATE)):
            raise DegeneratePropensityError("propensity within 1e-12 of 0 or 1")
    w = np.where(m == 1, pn / pd, (1.0 - pn) / (1.0 - pd))
    return float(w) if w.ndim == 0 else w


def _check_propensity(p, rows, label):
    bad = np.flatnonzero((p < _DEGENERATE) | (p > 1.0 - _DEGENERATE))
    if bad.size:
        unit = int(rows[bad[0]])
        raise DegeneratePropensityError(f"degenerate {label} propensity at unit {unit}", unit=unit)


@dataclass
class EffectEstimate:
    nie: float
    nde: float
    nie_se: float = float("nan")
    nde_se: float = float("nan")
    ci_level: float = 0.95
    method: str = "naive"
    rho: float | None = None
    k_imputations: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ate(self) -> float:
        return self.nie + self.nde

    def _ci(self, est, se):
        q = std_normal_quantile(1.0 - (1.0 - self.ci_level) / 2.0)
        return (est - q * se, est + q * se)

    @property
    def nie_ci(self):
        return self._ci(self.nie, self.nie_se)

    @property
    def nde_ci(self):
        return self._ci(self.nde, self.nde_se)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rho": self.rho,
            "nie": self.nie,
            "nie_se": self.nie_se,
            "nie_ci": list(self.nie_ci),
            "nde": self.nde,
            "nde_se": self.nde_se,
            "nde_ci": list(self.nde_ci),
            "ci_level": self.ci_level,
            "k_imputations": self.k_imputations,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything needed to re-run an analysis on a (resampled) dataset.

    ``z_covariates`` defaults to ``mediator_covariates``. With
    ``z_in_mediator_models`` false the sensitivity estimators collapse to the
    naive one (useful as a check). ``within_se`` picks the within-imputation
    variance: ``"bootstrap"`` refits the mediator models on ``within_boot``
    resamples of each imputed dataset; ``"linearized"`` is the delta-method
    variance of the weighted-mean contrast with weights held fixed.
    """

    mediator_covariates: tuple = ()
    z_covariates: tuple | None = None
    z_kind: str = "continuous"
    k_imputations: int = 25
    quadrature_order: int = 10
    n_boot: int = 200
    within_se: str = "bootstrap"
    within_boot: int = 100
    ci_level: float = 0.95
    dof_corrected: bool = True
    z_in_mediator_models: bool = True
    mediator_link: str = "logit"

    def __post_init__(self):
        object.__setattr__(self, "mediator_covariates", tuple(self.mediator_covariates))
        if self.z_covariates is not None:
            object.__setattr__(self, "z_covariates", tuple(self.z_covariates))
        if self.z_kind not in ("continuous", "binary"):
            raise InvalidArgumentError(f"unknown z kind {self.z_kind!r}")
        if self.within_se not in ("bootstrap", "linearized"):
            raise InvalidArgumentError(f"unknown within-imputation variance {self.within_se!r}")

    @property
    def z_predictors(self) -> tuple:
        return self.mediator_covariates if self.z_covariates is None else self.z_covariates


# ---------------------------------------------------------------------------
# point estimates
# ---------------------------------------------------------------------------

def _weighted_contrast(data: Dataset, w_treated: np.ndarray):
    y1 = data.y[data.treated]
    y0 = data.y[data.control]
    ybar1 = float(np.mean(y1))
    ybar0 = float(np.mean(y0))
    mu_w = float(np.dot(w_treated, y1) / np.sum(w_treated))
    return ybar1 - mu_w, mu_w - ybar0


def _diagnostics(w):
    return {
        "max_weight": float(np.max(w)),
        "effective_sample_size": float(np.sum(w) ** 2 / np.sum(w * w)),
    }


def _denominator(data: Dataset, med: MediatorModels, rows):
    p = _expit(med.linear_predictor(1, data, rows))
    _check_propensity(p, rows, "treated-arm")
    return p


def naive_weights(data: Dataset, med: MediatorModels) -> np.ndarray:
    rows = np.flatnonzero(data.treated)
    p_den = _denominator(data, med, rows)
    if med.includes_z:
        raise InvalidArgumentError("the naive weight uses mediator models without z")
    p_num = _expit(med.linear_predictor(0, data, rows))
    _check_propensity(p_num, rows, "control-arm")
    return rmpw_weight(data.m[rows], p_num, p_den)


def fixed_z0_weights(data: Dataset, med: MediatorModels, z0_treated) -> np.ndarray:
    """Weights with the numerator propensity evaluated at given Z(0) values."""
    rows = np.flatnonzero(data.treated)
    p_den = _denominator(data, med, rows)
    if med.includes_z:
        p_num = _expit(med.linear_predictor(0, data, rows, z_values=z0_treated))
    else:
        p_num = _expit(med.linear_predictor(0, data, rows))
    _check_propensity(p_num, rows, "control-arm")
    return rmpw_weight(data.m[rows], p_num, p_den)


def integrated_weights(data: Dataset, med: MediatorModels, law: ConditionalZ0,
                       quadrature_order: int = 10) -> np.ndarray:
    """Per treated unit, the weight averaged over the conditional law of Z(0)."""
    rows = np.flatnonzero(data.treated)
    p_den = _denominator(data, med, rows)
    m = data.m[rows]
    if not med.includes_z:
        p_num = _expit(med.linear_predictor(0, data, rows))
        _check_propensity(p_num, rows, "control-arm")
        return rmpw_weight(m, p_num, p_den)
    gamma = med.z_coefficient(0)
    # linear predictor of the control-arm model with the z term removed
    lin0 = med.linear_predictor(0, data, rows, z_values=np.zeros(rows.size))
    if law.kind == "normal":
        if np.all(law.sd == 0):
            p_num = _expit(lin0 + gamma * law.mean)
            _check_propensity(p_num, rows, "control-arm")
            return rmpw_weight(m, p_num, p_den)
        rule = gauss_hermite_rule(quadrature_order)
        wbar, bad = kernels.integrated_weights(m, lin0, gamma, law.mean, law.sd, p_den,
                                               rule.nodes, rule.weights)
        if bad >= 0:
            unit = int(rows[bad])
            raise DegeneratePropensityError(
                f"degenerate control-arm propensity at a quadrature node for unit {unit}",
                unit=unit)
        return wbar
    p_at0 = _expit(lin0)
    p_at1 = _expit(lin0 + gamma)
    _check_propensity(np.concatenate([p_at0, p_at1]), np.concatenate([rows, rows]),
                      "control-arm")
    return (law.p1 * rmpw_weight(m, p_at1, p_den)
            + (1.0 - law.p1) * rmpw_weight(m, p_at0, p_den))


def treated_law(data: Dataset, zmodel, rho10: float) -> ConditionalZ0:
    rows = np.flatnonzero(data.treated)
    x = np.column_stack([data.column(k)[rows] for k in zmodel.covariates]) \
        if zmodel.covariates else np.empty((rows.size, 0))
    return conditional_z0(zmodel, data.z[rows], x, rho10)


def draw_z0(law: ConditionalZ0, rng: RngStream) -> np.ndarray:
    g = rng.generator
    if law.kind == "normal":
        z = g.standard_normal(law.mean.shape)
        return np.where(law.sd == 0, law.mean, law.mean + law.sd * z)
    return (g.random(law.p1.shape) < law.p1).astype(float)


def _linearized_variance(data: Dataset, w: np.ndarray):
    """Delta-method variances of (NIE, NDE) with the weights treated as fixed."""
    y1 = data.y[data.treated]
    y0 = data.y[data.control]
    n1, n0 = y1.size, y0.size
    mu_w = float(np.dot(w, y1) / np.sum(w))
    a = (y1 - y1.mean()) / n1
    b = w * (y1 - mu_w) / np.sum(w)
    c = (y0 - y0.mean()) / n0
    var_nie = float(np.sum((a - b) ** 2))
    var_nde = float(np.sum(b ** 2) + np.sum(c ** 2))
    return var_nie, var_nde


# ---------------------------------------------------------------------------
# bootstrap and Rubin's rules
# ---------------------------------------------------------------------------

def stratified_resample(data: Dataset, rng: RngStream) -> Dataset:
    g = rng.generator
    idx = []
    for arm in (0, 1):
        rows = np.flatnonzero(data.t == arm)
        idx.append(rows[g.integers(0, rows.size, rows.size)])
    return data.take(np.concatenate(idx))


def bootstrap_replicates(data: Dataset, statistic: Callable[[Dataset], np.ndarray], b: int,
                         rng: RngStream, max_failure: float = 0.05) -> np.ndarray:
    """Evaluate ``statistic`` on ``b`` arm-stratified resamples.

    Resamples on which a model fails to fit are dropped; more than
    ``max_failure`` of them failing raises BootstrapInstabilityError.
    """
    out = []
    dropped = 0
    for r in range(b):
        sub = rng.substream("bootstrap", r)
        try:
            res = np.asarray(statistic(stratified_resample(data, sub)), dtype=float)
        except RmpwError:
            dropped += 1
            continue
        out.append(res)
    if dropped > max_failure * b:
        raise BootstrapInstabilityError(dropped, b)
    return np.array(out)


def bootstrap_se(data: Dataset, analysis: Callable[[Dataset], tuple], b: int,
                 rng: RngStream):
    """Standard deviations of (NIE, NDE) over ``b`` stratified resamples.

    ``analysis`` maps a dataset to ``(nie, nde)`` and must refit every model
    it uses; see :func:`point_estimator` for building one from a config.
    """
    if b < 50:
        raise InvalidArgumentError("bootstrap needs at least 50 resamples")
    reps = bootstrap_replicates(data, analysis, b, rng)
    sd = reps.std(axis=0, ddof=1)
    return float(sd[0]), float(sd[1])


def rubin_pool(estimates, within_ses):
    """Pool K completed-data estimates: total variance W + (1 + 1/K) B."""
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(within_ses, dtype=float) ** 2
    if q.shape != u.shape:
        raise InvalidArgumentError("one within-imputation SE per estimate is required")
    k = q.size
    if k < 2:
        raise InvalidArgumentError("Rubin's rules need at least two imputations")
    between = float(np.var(q, ddof=1))
    total = float(np.mean(u)) + (1.0 + 1.0 / k) * between
    # centring on q[0] makes K identical estimates pool to exactly that value
    return float(q[0] + np.mean(q - q[0])), math.sqrt(max(total, 0.0))


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------

def _naive_point(data: Dataset, cfg: EstimatorConfig):
    med = fit_mediator_models(data, False, cfg.mediator_covariates, cfg.mediator_link)
    w = naive_weights(data, med)
    return _weighted_contrast(data, w), w


def _oracle_point(data: Dataset, cfg: EstimatorConfig):
    if data.z0 is None:
        raise InvalidArgumentError("the oracle estimator needs the true Z(0) column")
    z0 = data.z0[data.treated]
    if not np.all(np.isfinite(z0)):
        raise InvalidArgumentError("true Z(0) must be known for every treated unit")
    med = fit_mediator_models(data, cfg.z_in_mediator_models, cfg.mediator_covariates,
                              cfg.mediator_link)
    w = fixed_z0_weights(data, med, z0)
    return _weighted_contrast(data, w), w


def _fit_models(data: Dataset, cfg: EstimatorConfig):
    zmodel = fit_z_model(data, cfg.z_predictors, cfg.z_kind, cfg.dof_corrected)
    med = fit_mediator_models(data, cfg.z_in_mediator_models, cfg.mediator_covariates,
                              cfg.mediator_link)
    return zmodel, med


def _integration_points(data: Dataset, cfg: EstimatorConfig, rhos, zmodel=None, med=None):
    if zmodel is None or med is None:
        zmodel, med = _fit_models(data, cfg)
    out = np.empty((len(rhos), 2))
    weights = []
    for i, rho in enumerate(rhos):
        w = integrated_weights(data, med, treated_law(data, zmodel, rho), cfg.quadrature_order)
        out[i] = _weighted_contrast(data, w)
        weights.append(w)
    return out, weights


def _imputation_draws(data: Dataset, cfg: EstimatorConfig, rho: float, k: int,
                      rng: RngStream, zmodel=None, med=None):
    """Per-draw (NIE, NDE), the imputed values and weights."""
    if zmodel is None or med is None:
        zmodel, med = _fit_models(data, cfg)
    law = treated_law(data, zmodel, rho)
    est = np.empty((k, 2))
    draws = []
    for j in range(k):
        z0 = draw_z0(law, rng.substream("imputation", j))
        w = fixed_z0_weights(data, med, z0)
        est[j] = _weighted_contrast(data, w)
        draws.append((z0, w))
    return est, draws


def point_estimator(method: str, cfg: EstimatorConfig, rho: float | None = None,
                    rng: RngStream | None = None) -> Callable[[Dataset], tuple]:
    """A dataset -> (nie, nde) function that refits all models each call."""
    if method == "naive":
        return lambda d: _naive_point(d, cfg)[0]
    if method == "oracle":
        return lambda d: _oracle_point(d, cfg)[0]
    if method == "integration":
        return lambda d: tuple(_integration_points(d, cfg, [rho])[0][0])
    if method == "imputation":
        state = {"calls": 0}

        def f(d):
            sub = rng.substream("refit", state["calls"])
            state["calls"] += 1
            est, _ = _imputation_draws(d, cfg, rho, cfg.k_imputations, sub)
            return tuple(est.mean(axis=0))
        return f
    raise InvalidArgumentError(f"unknown method {method!r}")


def _finish(nie, nde, se, cfg, method, rho=None, k=None, w=None):
    return EffectEstimate(
        nie=float(nie), nde=float(nde),
        nie_se=float(se[0]), nde_se=float(se[1]),
        ci_level=cfg.ci_level, method=method, rho=rho, k_imputations=k,
        diagnostics=_diagnostics(w) if w is not None else {},
    )


def _boot_se(data, method, cfg, rng, rho=None):
    if cfg.n_boot <= 0:
        return (float("nan"), float("nan"))
    if rng is None:
        raise InvalidArgumentError("bootstrap standard errors need an RngStream")
    return bootstrap_se(data, point_estimator(method, cfg, rho, rng), cfg.n_boot,
                        rng.substream("se", method, rho))


def estimate_naive(data: Dataset, mediator_covariates=None, cfg: EstimatorConfig | None = None,
                   rng: RngStream | None = None) -> EffectEstimate:
    """RMPW adjusting for pretreatment covariates only."""
    cfg = _config(cfg, mediator_covariates)
    (nie, nde), w = _naive_point(data, cfg)
    return _finish(nie, nde, _boot_se(data, "naive", cfg, rng), cfg, "naive", w=w)


def estimate_oracle(data: Dataset, mediator_covariates=None, cfg: EstimatorConfig | None = None,
                    rng: RngStream | None = None) -> EffectEstimate:
    """RMPW with the numerator propensity at the true Z(0) (simulation benchmark)."""
    cfg = _config(cfg, mediator_covariates)
    (nie, nde), w = _oracle_point(data, cfg)
    return _finish(nie, nde, _boot_se(data, "oracle", cfg, rng), cfg, "oracle", w=w)


def _config(cfg, mediator_covariates, **overrides):
    if cfg is None:
        cfg = EstimatorConfig(mediator_covariates=tuple(mediator_covariates or ()))
    elif mediator_covariates is not None:
        cfg = replace(cfg, mediator_covariates=tuple(mediator_covariates))
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _align(cfg: EstimatorConfig, zmodel) -> EstimatorConfig:
    if zmodel is None:
        return cfg
    return replace(cfg, z_kind=zmodel.kind, z_covariates=tuple(zmodel.covariates))


def estimate_integration(data: Dataset, zmodel, rho10: float, quadrature_order: int | None = None,
                         mediator_covariates=None, cfg: EstimatorConfig | None = None,
                         rng: RngStream | None = None) -> EffectEstimate:
    """Integration-based sensitivity estimate at one hypothesised ``rho10``.

    ``zmodel`` may be None, in which case it is fitted from ``cfg``. Standard
    errors come from a stratified bootstrap that refits the z-model and the
    mediator models (skipped when ``cfg.n_boot == 0``).
    """
    cfg = _align(_config(cfg, mediator_covariates), zmodel)
    if quadrature_order is not None:
        cfg = replace(cfg, quadrature_order=quadrature_order)
    if cfg.z_kind == "continuous" and cfg.quadrature_order < 2:
        raise InvalidArgumentError("quadrature order must be at least 2")
    data.validate(need_z=True)
    if zmodel is None:
        zmodel = fit_z_model(data, cfg.z_predictors, cfg.z_kind, cfg.dof_corrected)
    med = fit_mediator_models(data, cfg.z_in_mediator_models, cfg.mediator_covariates,
                              cfg.mediator_link)
    pts, ws = _integration_points(data, cfg, [rho10], zmodel, med)
    se = _boot_se(data, "integration", cfg, rng, rho10)
    return _finish(pts[0, 0], pts[0, 1], se, cfg, "integration", rho=rho10, w=ws[0])


def _within_variances(data: Dataset, cfg: EstimatorConfig, draws, rng: RngStream):
    out = np.empty((len(draws), 2))
    for j, (z0, w) in enumerate(draws):
        if cfg.within_se == "linearized" or cfg.within_boot <= 0:
            out[j] = _linearized_variance(data, w)
            continue
        full = np.full(data.n, np.nan)
        full[data.treated] = z0
        imputed = Dataset(data.t, data.m, data.y, data.covariates, data.z, full)
        reps = bootstrap_replicates(imputed, point_estimator("oracle", cfg), cfg.within_boot,
                                    rng.substream("within", j))
        out[j] = reps.var(axis=0, ddof=1)
    return out


def estimate_imputation(data: Dataset, zmodel, rho10: float, k: int | None = None,
                        rng: RngStream | None = None, mediator_covariates=None,
                        cfg: EstimatorConfig | None = None) -> EffectEstimate:
    """Multiple-imputation sensitivity estimate at one hypothesised ``rho10``.

    Draws ``k`` values of Z(0) per treated unit, forms one RMPW estimate per
    draw and pools them by Rubin's rules.
    """
    cfg = _align(_config(cfg, mediator_covariates), zmodel)
    k = cfg.k_imputations if k is None else int(k)
    if k < 2:
        raise InvalidArgumentError("imputation needs k >= 2")
    if rng is None:
        raise InvalidArgumentError("imputation needs an RngStream")
    data.validate(need_z=True)
    if zmodel is None:
        zmodel = fit_z_model(data, cfg.z_predictors, cfg.z_kind, cfg.dof_corrected)
    med = fit_mediator_models(data, cfg.z_in_mediator_models, cfg.mediator_covariates,
                              cfg.mediator_link)
    return _imputation_estimate(data, cfg, zmodel, med, rho10, k, rng)


def _imputation_estimate(data, cfg, zmodel, med, rho10, k, rng):
    est, draws = _imputation_draws(data, cfg, rho10, k, rng, zmodel, med)
    within = _within_variances(data, cfg, draws, rng)
    nie, nie_se = rubin_pool(est[:, 0], np.sqrt(within[:, 0]))
    nde, nde_se = rubin_pool(est[:, 1], np.sqrt(within[:, 1]))
    wall = np.concatenate([w for _, w in draws])
    res = _finish(nie, nde, (nie_se, nde_se), cfg, "imputation", rho=rho10, k=k, w=wall)
    res.diagnostics["between_variance"] = [float(np.var(est[:, 0], ddof=1)),
                                           float(np.var(est[:, 1], ddof=1))]
    return res


# ---------------------------------------------------------------------------
# sensitivity curve
# ---------------------------------------------------------------------------

@dataclass
class SensitivityResult:
    grid: list
    initial: EffectEstimate | None
    errors: dict = field(default_factory=dict)

    def _bounds(self, attr):
        vals = [getattr(e, attr) for _, e in self.grid]
        if not vals:
            return (float("nan"), float("nan"))
        return (float(min(vals)), float(max(vals)))

    @property
    def nie_bounds(self):
        return self._bounds("nie")

    @property
    def nde_bounds(self):
        return self._bounds("nde")


def sensitivity_curve(data: Dataset, zmodel, rho_values, method: str,
                      cfg: EstimatorConfig, rng: RngStream | None = None,
                      include_initial: bool = True) -> SensitivityResult:
    """Repeat the sensitivity estimate at each hypothesised rho.

    Models are fitted once on ``data``; with ``cfg.n_boot > 0`` the integration
    standard errors come from one set of resamples evaluated at every rho.
    Failures at individual rho values are recorded in ``errors`` and do not
    abort the curve.
    """
    rho_values = [float(r) for r in rho_values]
    if not rho_values:
        raise InvalidArgumentError("rho list is empty")
    if method not in ("imputation", "integration"):
        raise InvalidArgumentError("sensitivity method must be imputation or integration")
    cfg = _align(cfg, zmodel)
    data.validate(need_z=True)
    if zmodel is None:
        zmodel = fit_z_model(data, cfg.z_predictors, cfg.z_kind, cfg.dof_corrected)
    med = fit_mediator_models(data, cfg.z_in_mediator_models, cfg.mediator_covariates,
                              cfg.mediator_link)
    initial = estimate_naive(data, cfg=cfg, rng=rng) if include_initial else None
    grid, errors = [], {}
    if method == "integration":
        ok_rhos = []
        for i, rho in enumerate(rho_values):
            try:
                pts, ws = _integration_points(data, cfg, [rho], zmodel, med)
            except RmpwError as exc:
                errors[rho] = f"{type(exc).__name__}: {exc}"
                continue
            ok_rhos.append(rho)
            grid.append((rho, _finish(pts[0, 0], pts[0, 1], (np.nan, np.nan), cfg,
                                      "integration", rho=rho, w=ws[0])))
        if cfg.n_boot > 0 and ok_rhos:
            if rng is None:
                raise InvalidArgumentError("bootstrap standard errors need an RngStream")

            def stat(d):
                return _integration_points(d, cfg, ok_rhos)[0]

            reps = bootstrap_replicates(data, stat, cfg.n_boot,
                                        rng.substream("se", "integration-curve"))
            sd = reps.std(axis=0, ddof=1)
            for (_, est), s in zip(grid, sd):
                est.nie_se, est.nde_se = float(s[0]), float(s[1])
    else:
        if rng is None:
            raise InvalidArgumentError("imputation needs an RngStream")
        for i, rho in enumerate(rho_values):
            try:
                est = _imputation_estimate(data, cfg, zmodel, med, rho, cfg.k_imputations,
                                           rng.substream("rho", i))
            except RmpwError as exc:
                errors[rho] = f"{type(exc).__name__}: {exc}"
                continue
            grid.append((rho, est))
    return SensitivityResult(grid, initial, errors)
