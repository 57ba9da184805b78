"""Command-line front end: ``rmpwsens analyze | simulate | bounds``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .confounder import RhoInterval, rho_bounds, rho_bounds_multi, rho_grid
from .data import Dataset
from .errors import (
    DegenerateVarianceError,
    InvalidArgumentError,
    NumericalError,
    RmpwError,
    SchemaError,
    ValidationError,
)
from .estimators import EffectEstimate, EstimatorConfig, estimate_naive, sensitivity_curve
from .glm import fit_bivariate_probit, partial_correlation
from .numerics import RngStream
from .simulation import (
    ESTIMATORS,
    analysis_config,
    default_rho_grid,
    generate,
    replication_streams,
    run_monte_carlo,
    scenario_registry,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

REPORT_FIELDS = ("rho", "method", "nie", "nie_se", "nie_ci_lo", "nie_ci_hi",
                 "nde", "nde_se", "nde_ci_lo", "nde_ci_hi")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class AnalysisConfig:
    treatment: str = "t"
    mediator: str = "m"
    outcome: str = "y"
    z: str = "z"
    covariates: list = field(default_factory=list)
    auxiliary: list = field(default_factory=list)
    z_predictors: list | None = None
    z_kind: str = "continuous"
    method: str = "integration"
    k_imputations: int = 25
    quadrature_order: int = 10
    rho_values: list | None = None
    rho_range: tuple | None = None
    n_grid: int = 20
    bootstrap: int = 200
    within_se: str = "bootstrap"
    within_boot: int = 100
    ci_level: float = 0.95
    seed: int = 0
    stream_id: int = 0

    _TOP = {"columns", "z_kind", "method", "k_imputations", "quadrature_order", "rho",
            "bootstrap", "within_se", "within_boot", "ci_level", "seed", "stream_id"}
    _COLUMNS = {"treatment", "mediator", "outcome", "z", "covariates", "auxiliary",
                "z_predictors"}

    @classmethod
    def from_dict(cls, doc: dict) -> "AnalysisConfig":
        if not isinstance(doc, dict):
            raise InvalidArgumentError("config must be a JSON object")
        unknown = set(doc) - cls._TOP
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        cols = doc.get("columns", {})
        if set(cols) - cls._COLUMNS:
            raise InvalidArgumentError(f"unknown column keys: {sorted(set(cols) - cls._COLUMNS)}")
        for key in ("treatment", "mediator", "outcome", "z"):
            if key in cols:
                setattr(cfg, key, str(cols[key]))
        cfg.covariates = [str(c) for c in cols.get("covariates", [])]
        cfg.auxiliary = [str(c) for c in cols.get("auxiliary", [])]
        if cols.get("z_predictors") is not None:
            cfg.z_predictors = [str(c) for c in cols["z_predictors"]]
        for key in ("z_kind", "method", "within_se"):
            if key in doc:
                setattr(cfg, key, str(doc[key]))
        for key in ("k_imputations", "quadrature_order", "bootstrap", "within_boot", "seed",
                    "stream_id"):
            if key in doc:
                v = doc[key]
                if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                    raise InvalidArgumentError(f"{key} must be a nonnegative integer")
                setattr(cfg, key, v)
        if "ci_level" in doc:
            cfg.ci_level = float(doc["ci_level"])
        cfg._parse_rho(doc.get("rho"))
        cfg.check()
        return cfg

    def _parse_rho(self, spec):
        if spec is None:
            if not self.auxiliary:
                raise InvalidArgumentError(
                    "config needs a rho specification or auxiliary columns to derive one")
            return
        if isinstance(spec, list):
            spec = {"values": spec}
        if not isinstance(spec, dict):
            raise InvalidArgumentError("rho must be a list or an object")
        extra = set(spec) - {"values", "range", "from_auxiliaries", "n_grid"}
        if extra:
            raise InvalidArgumentError(f"unknown rho keys: {sorted(extra)}")
        if "n_grid" in spec:
            self.n_grid = int(spec["n_grid"])
        if "values" in spec:
            vals = [float(v) for v in spec["values"]]
            if not vals:
                raise InvalidArgumentError("rho values must be nonempty")
            self.rho_values = vals
        elif "range" in spec:
            lo, hi = (float(v) for v in spec["range"])
            self.rho_range = (lo, hi)
        elif not spec.get("from_auxiliaries"):
            raise InvalidArgumentError("rho needs values, a range, or from_auxiliaries")
        elif not self.auxiliary:
            raise InvalidArgumentError("from_auxiliaries needs auxiliary columns")

    def check(self):
        if self.z_kind not in ("continuous", "binary"):
            raise InvalidArgumentError("z_kind must be 'continuous' or 'binary'")
        if self.method not in ("imputation", "integration", "both"):
            raise InvalidArgumentError("method must be imputation, integration or both")
        if not 0.0 < self.ci_level < 1.0:
            raise InvalidArgumentError("ci_level must lie in (0, 1)")
        if self.k_imputations < 2:
            raise InvalidArgumentError("k_imputations must be at least 2")
        if self.n_grid < 2:
            raise InvalidArgumentError("n_grid must be at least 2")
        if 0 < self.bootstrap < 50:
            raise InvalidArgumentError("bootstrap must be 0 (off) or at least 50")
        for v in self.rho_values or []:
            if not -1.0 <= v <= 1.0:
                raise InvalidArgumentError(f"rho value {v} outside [-1, 1]")

    @property
    def predictors(self) -> list:
        return self.covariates if self.z_predictors is None else self.z_predictors

    @property
    def methods(self) -> list:
        return ["imputation", "integration"] if self.method == "both" else [self.method]

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            mediator_covariates=tuple(self.covariates),
            z_covariates=tuple(self.predictors),
            z_kind=self.z_kind,
            k_imputations=self.k_imputations,
            quadrature_order=self.quadrature_order,
            n_boot=self.bootstrap,
            within_se=self.within_se,
            within_boot=self.within_boot,
            ci_level=self.ci_level,
        )

    def columns_used(self) -> list:
        cols = [self.treatment, self.mediator, self.outcome, self.z]
        for c in self.covariates + self.auxiliary + self.predictors:
            if c not in cols:
                cols.append(c)
        return cols


def load_config(path) -> AnalysisConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config {path} is not valid JSON: {exc}") from None
    return AnalysisConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def read_dataset(path, cfg: AnalysisConfig) -> Dataset:
    """Read and validate the columns ``cfg`` refers to; every bad cell is reported."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError([(0, "", "file is empty")]) from None
        header = [h.strip() for h in header]
        wanted = cfg.columns_used()
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError([(0, c, "missing column") for c in missing])
        pos = {c: header.index(c) for c in wanted}
        values = {c: [] for c in wanted}
        problems = []
        binary = {cfg.treatment, cfg.mediator} | ({cfg.z} if cfg.z_kind == "binary" else set())
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            for c in wanted:
                j = pos[c]
                cell = row[j].strip() if j < len(row) else ""
                try:
                    v = float(cell)
                except ValueError:
                    problems.append((i, c, f"not a number: {cell!r}"))
                    continue
                if not math.isfinite(v):
                    problems.append((i, c, "non-finite value"))
                elif c in binary and v not in (0.0, 1.0):
                    problems.append((i, c, f"must be 0 or 1, got {cell}"))
                values[c].append(v)
        if problems:
            raise SchemaError(problems)
    arr = {c: np.array(v, dtype=float) for c, v in values.items()}
    if arr[cfg.treatment].size == 0:
        raise SchemaError([(0, "", "no data rows")])
    covs = {c: arr[c] for c in wanted if c not in (cfg.treatment, cfg.mediator, cfg.outcome, cfg.z)}
    return Dataset(arr[cfg.treatment], arr[cfg.mediator], arr[cfg.outcome], covs, arr[cfg.z])


def write_dataset(path, data: Dataset, extra: dict | None = None) -> None:
    """Write a dataset with full float precision (round-trips exactly)."""
    cols = {"t": data.t, "m": data.m, "y": data.y, "z": data.z}
    cols.update(data.covariates)
    cols.update(extra or {})
    names = list(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(data.n):
            w.writerow([_fmt(cols[c][i]) for c in names])


def _fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


# ---------------------------------------------------------------------------
# bounds from data
# ---------------------------------------------------------------------------

def auxiliary_correlations(data: Dataset, cfg: AnalysisConfig, column: str):
    """(rho_1C, rho_0C) for one auxiliary covariate, by arm."""
    c = data.column(column)
    c_binary = bool(np.all((c == 0) | (c == 1)))
    out = []
    for arm in (1, 0):
        rows = np.flatnonzero(data.t == arm)
        design = data.design(cfg.predictors, rows=rows)
        if cfg.z_kind == "binary":
            if not c_binary:
                raise InvalidArgumentError(
                    f"auxiliary {column!r} must be binary when z is binary")
            fit = fit_bivariate_probit(design, data.z[rows], c[rows])
            out.append(fit.rho)
        else:
            r = partial_correlation(data.z[rows], c[rows], design)
            if 1.0 - abs(r) <= 1e-12:
                # an auxiliary that is z itself carries no baseline information
                raise DegenerateVarianceError(
                    f"auxiliary {column!r} is an exact linear function of z in arm {arm}")
            out.append(r)
    return out[0], out[1]


def bounds_from_data(data: Dataset, cfg: AnalysisConfig, columns):
    per = []
    for col in columns:
        r1, r0 = auxiliary_correlations(data, cfg, col)
        per.append({"column": col, "rho_1c": r1, "rho_0c": r0,
                    "interval": rho_bounds(r1, r0).as_list()})
    inter = rho_bounds_multi([(p["rho_1c"], p["rho_0c"]) for p in per])
    return per, inter


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _report_row(rho, est: EffectEstimate) -> dict:
    lo, hi = est.nie_ci
    dlo, dhi = est.nde_ci
    return {"rho": rho, "method": est.method, "nie": est.nie, "nie_se": est.nie_se,
            "nie_ci_lo": lo, "nie_ci_hi": hi, "nde": est.nde, "nde_se": est.nde_se,
            "nde_ci_lo": dlo, "nde_ci_hi": dhi}


def _excludes_zero(ci):
    lo, hi = ci
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return None
    return lo > 0 or hi < 0


def _verdicts(initial: EffectEstimate, grid) -> dict:
    out = {}
    for eff in ("nie", "nde"):
        vals = [getattr(e, eff) for _, e in grid]
        lo, hi = (min(vals), max(vals)) if vals else (math.nan, math.nan)
        point = getattr(initial, eff)
        base = _excludes_zero(getattr(initial, f"{eff}_ci"))
        flags = [_excludes_zero(getattr(e, f"{eff}_ci")) for _, e in grid]
        known = [f for f in flags if f is not None]
        flips = None if base is None or not known else any(f != base for f in known)
        out[eff] = {
            "bounds": [lo, hi],
            "initial_inside_bounds": bool(lo <= point <= hi) if vals else None,
            "initial_ci_excludes_zero": base,
            "conclusion_flips": flips,
        }
    return out


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _dump(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _warn(messages, text):
    messages.append(text)
    print(f"warning: {text}", file=sys.stderr)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    data = read_dataset(args.input, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    notes = []
    missing = [c for c in cfg.covariates if c not in cfg.predictors]
    if missing:
        _warn(notes, f"z predictors do not include mediator covariates {missing}")

    interval = None
    aux_info = None
    if cfg.auxiliary:
        aux_info, interval = bounds_from_data(data, cfg, cfg.auxiliary)
    if cfg.rho_values is not None:
        rhos = list(cfg.rho_values)
    elif cfg.rho_range is not None:
        rhos = [float(r) for r in rho_grid(RhoInterval(*cfg.rho_range), cfg.n_grid)]
    else:
        rhos = [float(r) for r in rho_grid(interval, cfg.n_grid)]
    if interval is not None:
        for r in rhos:
            if not interval.contains(r):
                _warn(notes, f"rho10 = {r:.4f} lies outside the auxiliary-covariate bounds "
                             f"[{interval.lower:.4f}, {interval.upper:.4f}]")

    est_cfg = cfg.estimator_config()
    rng = RngStream(cfg.seed, cfg.stream_id)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        initial = estimate_naive(data, cfg=est_cfg, rng=rng)
        rows, errors, methods = [], {}, {}
        for method in cfg.methods:
            res = sensitivity_curve(data, None, rhos, method, est_cfg, rng, include_initial=False)
            methods[method] = res
            rows.extend(_report_row(r, e) for r, e in res.grid)
            for r, msg in res.errors.items():
                errors.setdefault(method, {})[repr(r)] = msg
    for w in caught:
        _warn(notes, str(w.message))

    _dump(out / "initial.json", initial.to_dict())
    rows.sort(key=lambda r: (r["method"], r["rho"]))
    with open(out / "sensitivity.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    summary = {
        "n": data.n,
        "rho_grid": rhos,
        "rho_interval": interval.as_list() if interval is not None else None,
        "auxiliary": aux_info,
        "initial": initial.to_dict(),
        "methods": {m: _verdicts(initial, res.grid) for m, res in methods.items()},
        "warnings": notes,
        "errors": errors,
    }
    _dump(out / "summary.json", summary)
    if errors:
        for m, errs in errors.items():
            for r, msg in errs.items():
                print(f"error: {m} at rho={r}: {msg}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _parse_grid(text, spec):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise InvalidArgumentError("--rho-grid must look like LO:HI:COUNT") from None
    if count < 2 or not -1.0 <= lo <= hi <= 1.0:
        raise InvalidArgumentError("--rho-grid needs -1 <= LO <= HI <= 1 and COUNT >= 2")
    return default_rho_grid(spec, count, lo, hi)


def emitted_config(spec, cfg: EstimatorConfig, grid, seed: int, stream_id: int) -> dict:
    """Config reproducing one simulated replication with ``rmpwsens analyze``."""
    return {
        "columns": {"treatment": "t", "mediator": "m", "outcome": "y", "z": "z",
                    "covariates": list(cfg.mediator_covariates),
                    "z_predictors": list(cfg.z_predictors)},
        "z_kind": cfg.z_kind,
        "method": "both",
        "k_imputations": cfg.k_imputations,
        "quadrature_order": cfg.quadrature_order,
        "rho": {"values": list(grid)},
        "bootstrap": cfg.n_boot,
        "within_se": cfg.within_se,
        "within_boot": cfg.within_boot,
        "ci_level": cfg.ci_level,
        "seed": seed,
        "stream_id": stream_id,
    }


def cmd_simulate(args) -> int:
    spec = scenario_registry(args.scenario)
    if args.replications < 1:
        raise InvalidArgumentError("--replications must be positive")
    n = spec.n if args.n is None else args.n
    if n < 4:
        raise InvalidArgumentError("--n must be at least 4")
    if args.true_rho_only:
        grid = [float(spec.true_rho)]
    elif args.rho_grid:
        grid = _parse_grid(args.rho_grid, spec)
    else:
        grid = default_rho_grid(spec)
    estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    bad = [e for e in estimators if e not in ESTIMATORS]
    if bad:
        raise InvalidArgumentError(f"unknown estimators {bad}")
    cfg = analysis_config(spec, n_boot=args.bootstrap, k_imputations=args.k,
                          quadrature_order=args.order)
    summary = run_monte_carlo(spec, args.replications, estimators, args.seed, grid, n, cfg,
                              true_effects_n=args.truth_n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "replications.csv").write_text(summary.rows_csv(), encoding="utf-8")
    (out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
    if args.emit_csv:
        ddir = out / "data"
        ddir.mkdir(exist_ok=True)
        for rep in range(args.replications):
            gen_rng, ana_rng = replication_streams(args.seed, rep)
            sim = generate(spec, gen_rng, n=n)
            write_dataset(ddir / f"rep_{rep:05d}.csv", sim.data, {"z0": sim.data.z0})
            _dump(ddir / f"rep_{rep:05d}.json",
                  emitted_config(spec, cfg, summary.rho_grid, args.seed, ana_rng.stream_id))
    for rep, msg in sorted(summary.failures.items()):
        print(f"warning: replication {rep} failed: {msg}", file=sys.stderr)
    if not summary.valid:
        print(f"error: {len(summary.failures)} of {summary.replications} replications failed "
              "(more than 2%); summary flagged invalid", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    explicit = args.rho1c is not None or args.rho0c is not None
    if explicit == (args.input is not None):
        raise InvalidArgumentError("give either --rho1c/--rho0c pairs or --input/--config/--aux")
    if explicit:
        r1, r0 = args.rho1c or [], args.rho0c or []
        if len(r1) != len(r0):
            raise InvalidArgumentError("--rho1c and --rho0c must be given the same number of times")
        per = [{"rho_1c": a, "rho_0c": b, "interval": rho_bounds(a, b).as_list()}
               for a, b in zip(r1, r0)]
        inter = rho_bounds_multi(list(zip(r1, r0)))
    else:
        if args.config is None or args.aux is None:
            raise InvalidArgumentError("--input needs --config and --aux")
        cfg = load_config_for_bounds(args.config)
        cols = [c.strip() for c in args.aux.split(",") if c.strip()]
        cfg.auxiliary = cols
        data = read_dataset(args.input, cfg)
        per, inter = bounds_from_data(data, cfg, cols)
    print(json.dumps(_json_safe({"per_auxiliary": per, "intersection": inter.as_list()}),
                     indent=2, sort_keys=True))
    return EXIT_OK


def load_config_for_bounds(path) -> AnalysisConfig:
    """Like :func:`load_config` but a rho specification is not required."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from None
    if isinstance(doc, dict) and "rho" not in doc:
        doc = dict(doc, rho=[0.0])
    return AnalysisConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmpwsens", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="sensitivity analysis of a CSV dataset")
    a.add_argument("--input", required=True)
    a.add_argument("--config", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="Monte Carlo study of a built-in scenario")
    s.add_argument("scenario")
    s.add_argument("--replications", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--rho-grid", default=None, metavar="LO:HI:COUNT")
    s.add_argument("--true-rho-only", action="store_true")
    s.add_argument("--emit-csv", action="store_true",
                   help="also write each replication's data and a matching analyze config")
    s.add_argument("--estimators", default=",".join(ESTIMATORS))
    s.add_argument("--bootstrap", type=int, default=0, help="resamples per SE (0 = off)")
    s.add_argument("--k", type=int, default=25, help="imputations")
    s.add_argument("--order", type=int, default=10, help="Gauss-Hermite order")
    s.add_argument("--truth-n", type=int, default=0,
                   help="also compute benchmark effects from this many draws")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", help="bounds on rho10 from auxiliary covariates")
    b.add_argument("--rho1c", type=float, action="append")
    b.add_argument("--rho0c", type=float, action="append")
    b.add_argument("--input")
    b.add_argument("--config")
    b.add_argument("--aux", help="comma-separated auxiliary columns")
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RmpwError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
