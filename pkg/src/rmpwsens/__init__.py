"""Sensitivity analysis for natural direct and indirect effects estimated by
ratio-of-mediator-probability weighting when a post-treatment confounder of
the mediator-outcome relation is only partially observed."""
from .confounder import (
    RhoInterval,
    conditional_z0,
    fit_z_model,
    rho_bounds,
    rho_bounds_multi,
    rho_grid,
)
from .data import Dataset
from .errors import NumericalError, RmpwError, ValidationError
from .estimators import (
    EffectEstimate,
    EstimatorConfig,
    SensitivityResult,
    bootstrap_se,
    estimate_imputation,
    estimate_integration,
    estimate_naive,
    estimate_oracle,
    fit_mediator_models,
    rmpw_weight,
    rubin_pool,
    sensitivity_curve,
)
from .kernels import BACKEND
from .numerics import RngStream, bivariate_normal_cdf, gauss_hermite_rule

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "EffectEstimate",
    "EstimatorConfig",
    "NumericalError",
    "RhoInterval",
    "RmpwError",
    "RngStream",
    "SensitivityResult",
    "ValidationError",
    "bivariate_normal_cdf",
    "bootstrap_se",
    "conditional_z0",
    "estimate_imputation",
    "estimate_integration",
    "estimate_naive",
    "estimate_oracle",
    "fit_mediator_models",
    "fit_z_model",
    "gauss_hermite_rule",
    "rho_bounds",
    "rho_bounds_multi",
    "rho_grid",
    "rmpw_weight",
    "rubin_pool",
    "sensitivity_curve",
]
