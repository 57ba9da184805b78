"""The observed-data container shared by the estimators and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, MissingColumnError, ValidationError
from .glm import DesignMatrix


@dataclass(frozen=True)
class Dataset:
    """Observed units.

    ``t`` and ``m`` are 0/1 arrays, ``y`` real; ``covariates`` maps names to
    real columns (pretreatment covariates, auxiliary covariates, extra
    predictors of z all live here and are selected by name). ``z`` is the
    observed post-treatment confounder, ``z0`` the true counterfactual Z(0)
    for treated units when it is known (simulated data only).
    """

    t: np.ndarray
    m: np.ndarray
    y: np.ndarray
    covariates: dict = field(default_factory=dict)
    z: np.ndarray | None = None
    z0: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t)
        n = t.shape[0]
        conv = {}
        for name in ("t", "m"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (n,):
                raise InvalidArgumentError(f"{name} must have one entry per unit")
            if not np.all((a == 0) | (a == 1)):
                raise InvalidArgumentError(f"{name} must be coded 0/1")
            conv[name] = a.astype(np.int64)
        for name in ("y", "z", "z0"):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=float)
            if a.shape != (n,):
                raise InvalidArgumentError(f"{name} must have one entry per unit")
            if name != "z0" and not np.all(np.isfinite(a)):
                raise InvalidArgumentError(f"{name} contains non-finite values")
            conv[name] = a
        covs = {}
        for k, v in dict(self.covariates).items():
            a = np.asarray(v, dtype=float)
            if a.shape != (n,):
                raise InvalidArgumentError(f"covariate {k!r} must have one entry per unit")
            if not np.all(np.isfinite(a)):
                raise InvalidArgumentError(f"covariate {k!r} contains non-finite values")
            covs[k] = a
        conv["covariates"] = covs
        for k, v in conv.items():
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def treated(self) -> np.ndarray:
        return self.t == 1

    @property
    def control(self) -> np.ndarray:
        return self.t == 0

    def validate(self, need_z: bool = False) -> None:
        """Check the conditions every estimator relies on."""
        if not self.treated.any() or not self.control.any():
            raise ValidationError("both treatment arms must be nonempty")
        for arm, mask in (("treated", self.treated), ("control", self.control)):
            mm = self.m[mask]
            if mm.min() == mm.max():
                raise ValidationError(f"mediator takes a single value in the {arm} arm")
        if need_z and self.z is None:
            raise MissingColumnError("the post-treatment confounder column z is required")

    def column(self, name: str) -> np.ndarray:
        if name == "z":
            if self.z is None:
                raise MissingColumnError("z")
            return self.z
        try:
            return self.covariates[name]
        except KeyError:
            raise MissingColumnError(name) from None

    def design(self, names, rows=None, include_z: bool = False, z_values=None) -> DesignMatrix:
        """Intercept, then z (if requested), then the named covariates."""
        rows = slice(None) if rows is None else rows
        cols, labels = [], []
        if include_z:
            z = self.column("z")[rows] if z_values is None else np.asarray(z_values, dtype=float)
            cols.append(z)
            labels.append("z")
        for k in names:
            cols.append(self.column(k)[rows])
            labels.append(k)
        n = self.t[rows].shape[0]
        values = np.column_stack([np.ones(n)] + cols) if cols else np.ones((n, 1))
        return DesignMatrix(values, ("(intercept)",) + tuple(labels))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.t[idx],
            self.m[idx],
            self.y[idx],
            {k: v[idx] for k, v in self.covariates.items()},
            None if self.z is None else self.z[idx],
            None if self.z0 is None else self.z0[idx],
        )

    def with_z(self, z) -> "Dataset":
        return Dataset(self.t, self.m, self.y, self.covariates, z, self.z0)
