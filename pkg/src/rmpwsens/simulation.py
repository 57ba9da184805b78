"""Data-generating scenarios, benchmark effects and the Monte Carlo harness.

Each scenario draws, per unit, treatment T, baseline covariates, the two
potential confounders Z(0), Z(1), the potential mediators M(0), M(1) from
arm-specific logit models, and outcomes from arm-specific linear models

    Y(t, m) = b0 + bZ Z(t) + bM m + bZM Z(t) m + bX X + bA A + br r_t + eta_t.

``Y(1, M(0))`` evaluates the arm-1 equation at ``M(0)`` and ``Z(1)``. Two
alternative readings of the outcome equation are available through
``generate``'s keyword flags: the interaction built from Z(0)·M(0) in both
arms, and the residual term fixed at r0 in both arms.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import expit, ndtr

from .data import Dataset
from .errors import InvalidArgumentError, NumericalError, RmpwError
from .estimators import EstimatorConfig, estimate_naive, estimate_oracle, sensitivity_curve
from .numerics import RngStream

# Gaussian-copula correlation reproducing a Pearson correlation of 0.20
# between the two gamma marginals; see scripts/calibrate_gamma_copula.py.
GAMMA_COPULA_RHO = 0.250904

ESTIMATORS = ("naive", "oracle", "imputation", "integration")


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    n: int
    p_treat: float
    x_law: dict
    a_law: dict | None
    z_kind: str
    z_structural: dict
    residual_law: dict
    mediator_alphas: dict
    outcome_betas: dict
    true_rho: float
    z_predictors: tuple
    mediator_covariates: tuple
    outcome_noise_sd: float = 0.1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["z_predictors"] = list(self.z_predictors)
        d["mediator_covariates"] = list(self.mediator_covariates)
        return d

    def with_n(self, n: int) -> "ScenarioSpec":
        if int(n) != n or n < 4:
            raise InvalidArgumentError("sample size must be an integer >= 4")
        d = asdict(self)
        d["n"] = int(n)
        return ScenarioSpec(**d)


_NORMAL_X = {"family": "normal", "mean": 0.0, "sd": 0.5}
_CONT_Z = {"arm0": {"intercept": 0.0, "x": 0.5}, "arm1": {"intercept": 0.5, "x": 1.0}}
_BIN_Z = {"arm0": {"intercept": 0.0, "x": 0.2}, "arm1": {"intercept": 0.3, "x": -0.2}}
_ALPHA_A = {"arm0": [0.0, 1.0, 0.7, 0.0], "arm1": [0.5, 0.5, 1.5, 0.0]}
_ALPHA_8 = {"arm0": [0.0, 0.5, 0.4, 1.0], "arm1": [0.3, 1.0, 1.0, -1.0]}
_ALPHA_B = {"arm0": [0.0, 1.2, 0.7, 0.0], "arm1": [0.3, -0.7, 0.3, 0.0]}
_BETA_A = {"arm0": [0.0, 0.5, 1.0, -0.5, 0.4, 0.0, 0.2],
           "arm1": [0.7, -1.0, 2.0, 0.5, 0.5, 0.0, 0.4]}
_BETA_8 = {"arm0": [0.0, 0.5, 1.0, -0.5, 0.4, 0.7, 0.2],
           "arm1": [0.7, -1.0, 2.0, 0.5, 0.5, 0.3, 0.4]}
_BETA_B = {"arm0": [0.0, 1.0, 1.0, -1.0, 0.4, 0.0, 0.8],
           "arm1": [0.7, -1.5, 1.5, 1.0, 0.5, 0.0, 1.0]}


def _bvn_law(rho):
    return {"family": "bivariate_normal", "var0": 0.5, "var1": 1.0, "rho": rho}


def _continuous(id_, n, rho):
    return ScenarioSpec(id_, n, 0.5, _NORMAL_X, None, "continuous", _CONT_Z, _bvn_law(rho),
                        _ALPHA_A, _BETA_A, rho, ("x",), ("x",))


def _registry() -> dict:
    reg = {}
    for i, (n, rho) in enumerate([(2000, 0.5), (2000, 0.0), (2000, -0.5),
                                  (200, 0.5), (200, 0.0), (200, -0.5)], start=1):
        reg[str(i)] = _continuous(str(i), n, rho)
    latent = {"family": "latent_factor", "l_sd": 0.5, "loadings": [1.0, 2.0],
              "var0": 0.2, "var1": 0.4, "rho": 0.5}
    reg["7a"] = ScenarioSpec("7a", 2000, 0.5, _NORMAL_X, None, "continuous", _CONT_Z, latent,
                             _ALPHA_A, _BETA_A, 0.8, ("x",), ("x",))
    reg["7b"] = ScenarioSpec("7b", 2000, 0.5, _NORMAL_X, None, "continuous", _CONT_Z, latent,
                             _ALPHA_A, _BETA_A, 0.5, ("x", "l"), ("x",))
    reg["8"] = ScenarioSpec(
        "8", 2000, 0.5, {"family": "normal", "mean": 0.0, "sd": 0.4},
        {"family": "bernoulli", "p": 0.5}, "continuous",
        {"arm0": {"intercept": 0.0, "x": 0.5, "a": 0.1},
         "arm1": {"intercept": 0.5, "x": 1.0, "a": 0.8}},
        {"family": "heteroscedastic_by_a",
         "a0": {"var0": 0.8, "var1": 0.5, "rho": 0.6},
         "a1": {"var0": 0.5, "var1": 1.0, "rho": 0.2}},
        _ALPHA_8, _BETA_8, 0.4, ("x", "a"), ("x", "a"))
    reg["9"] = ScenarioSpec(
        "9", 2000, 0.5, _NORMAL_X, None, "continuous", _CONT_Z,
        {"family": "gamma_copula", "shapes": [0.5, 0.8], "rates": [1.0, 2.0],
         "rho": 0.2, "copula_rho": GAMMA_COPULA_RHO},
        _ALPHA_A, _BETA_A, 0.2, ("x",), ("x",))
    reg["10"] = ScenarioSpec(
        "10", 700, 0.3, {"family": "bernoulli", "p": 0.5}, None, "continuous",
        {"arm0": {"intercept": 0.5, "x": 0.5}, "arm1": {"intercept": 0.7, "x": 1.0}},
        {"family": "zero_inflated", "p0": 0.93, "p1": 0.97, "sd0": 0.2, "sd1": 0.3, "rho": 0.0},
        _ALPHA_A, _BETA_A, 0.0, ("x",), ("x",))
    reg["11"] = ScenarioSpec(
        "11", 2000, 0.5,
        {"family": "categorical", "values": [-1.0, 0.0, 1.0, 1.5], "probs": [0.25, 0.25, 0.2, 0.3]},
        None, "binary", _BIN_Z,
        {"family": "bivariate_normal", "var0": 1.0, "var1": 1.0, "rho": 0.5},
        _ALPHA_B, _BETA_B, 0.5, ("x",), ("x",))
    reg["12"] = ScenarioSpec("12", 2000, 0.5, _NORMAL_X, None, "binary", _BIN_Z,
                             {"family": "independent_logistic"},
                             _ALPHA_B, _BETA_B, 0.0, ("x",), ("x",))
    return reg


SCENARIOS = _registry()
SCENARIO_IDS = tuple(SCENARIOS)


def scenario_registry(scenario_id) -> ScenarioSpec:
    key = str(scenario_id)
    if key == "7":
        key = "7a"
    try:
        return SCENARIOS[key]
    except KeyError:
        raise InvalidArgumentError(f"unknown scenario {scenario_id!r}; known: "
                                   + ", ".join(SCENARIO_IDS)) from None


def manifest() -> str:
    """Human-readable JSON of every scenario's parameterization."""
    return json.dumps({k: v.to_dict() for k, v in SCENARIOS.items()}, indent=2,
                      sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimDataset:
    data: Dataset
    z0: np.ndarray
    z1: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    y1m0: np.ndarray
    r0: np.ndarray
    r1: np.ndarray


def _draw_x(law, g, n):
    fam = law["family"]
    if fam == "normal":
        return law["mean"] + law["sd"] * g.standard_normal(n)
    if fam == "bernoulli":
        return (g.random(n) < law["p"]).astype(float)
    if fam == "categorical":
        return g.choice(np.asarray(law["values"]), size=n, p=np.asarray(law["probs"]))
    raise InvalidArgumentError(f"unknown covariate law {fam!r}")


def _correlated_normals(g, n, var0, var1, rho):
    e0 = g.standard_normal(n)
    e1 = rho * e0 + math.sqrt(1.0 - rho * rho) * g.standard_normal(n)
    return math.sqrt(var0) * e0, math.sqrt(var1) * e1


def _draw_residuals(law, g, n, a):
    """Residuals (r0, r1), plus any latent predictor the law introduces."""
    fam = law["family"]
    extra = {}
    if fam == "bivariate_normal":
        r0, r1 = _correlated_normals(g, n, law["var0"], law["var1"], law["rho"])
    elif fam == "latent_factor":
        ell = law["l_sd"] * g.standard_normal(n)
        p0, p1 = _correlated_normals(g, n, law["var0"], law["var1"], law["rho"])
        r0 = law["loadings"][0] * ell + p0
        r1 = law["loadings"][1] * ell + p1
        extra["l"] = ell
    elif fam == "heteroscedastic_by_a":
        b0 = _correlated_normals(g, n, **law["a0"])
        b1 = _correlated_normals(g, n, **law["a1"])
        r0 = np.where(a == 1, b1[0], b0[0])
        r1 = np.where(a == 1, b1[1], b0[1])
    elif fam == "gamma_copula":
        u0, u1 = _correlated_normals(g, n, 1.0, 1.0, law["copula_rho"])
        (k0, k1), (l0, l1) = law["shapes"], law["rates"]
        # upper-tail inverse keeps far-right quantiles finite
        r0 = stats.gamma.isf(ndtr(-u0), k0, scale=1.0 / l0) - k0 / l0
        r1 = stats.gamma.isf(ndtr(-u1), k1, scale=1.0 / l1) - k1 / l1
    elif fam == "zero_inflated":
        r0, r1 = _correlated_normals(g, n, law["sd0"] ** 2, law["sd1"] ** 2, law["rho"])
        extra["i0"] = (g.random(n) < law["p0"]).astype(float)
        extra["i1"] = (g.random(n) < law["p1"]).astype(float)
    elif fam == "independent_logistic":
        r0 = g.logistic(size=n)
        r1 = g.logistic(size=n)
    else:
        raise InvalidArgumentError(f"unknown residual law {fam!r}")
    return r0, r1, extra


def _structural(coefs, x, a):
    out = coefs["intercept"] + coefs["x"] * x
    if "a" in coefs:
        out = out + coefs["a"] * a
    return out


def generate(spec: ScenarioSpec, rng: RngStream, n: int | None = None,
             interaction: str = "arm", residual: str = "arm") -> SimDataset:
    """Draw one dataset from ``spec``.

    ``interaction="arm"`` uses Z(t)·M in the arm-t outcome; ``"literal"``
    uses Z(0)·M(0) in both arms. ``residual="arm"`` puts r_t in the arm-t
    outcome; ``"r0"`` uses r0 in both arms. The non-default readings are kept
    for comparison only.
    """
    if interaction not in ("arm", "literal"):
        raise InvalidArgumentError("interaction must be 'arm' or 'literal'")
    if residual not in ("arm", "r0"):
        raise InvalidArgumentError("residual must be 'arm' or 'r0'")
    n = spec.n if n is None else int(n)
    g = rng.generator
    t = (g.random(n) < spec.p_treat).astype(np.int64)
    x = _draw_x(spec.x_law, g, n)
    a = _draw_x(spec.a_law, g, n) if spec.a_law else np.zeros(n)
    r0, r1, extra = _draw_residuals(spec.residual_law, g, n, a)
    lat0 = _structural(spec.z_structural["arm0"], x, a) + r0
    lat1 = _structural(spec.z_structural["arm1"], x, a) + r1
    if spec.z_kind == "binary":
        z0 = (lat0 > 0).astype(float)
        z1 = (lat1 > 0).astype(float)
    elif "i0" in extra:
        z0 = extra["i0"] * lat0
        z1 = extra["i1"] * lat1
    else:
        z0, z1 = lat0, lat1

    def mediator(arm, z):
        c0, cz, cx, ca = spec.mediator_alphas[f"arm{arm}"]
        return (g.random(n) < expit(c0 + cz * z + cx * x + ca * a)).astype(np.int64)

    m0 = mediator(0, z0)
    m1 = mediator(1, z1)
    eta0 = spec.outcome_noise_sd * g.standard_normal(n)
    eta1 = spec.outcome_noise_sd * g.standard_normal(n)

    def outcome(arm, z, m, eta):
        b0, bz, bm, bzm, bx, ba, br = spec.outcome_betas[f"arm{arm}"]
        zm = z * m if interaction == "arm" else z0 * m0
        r = r1 if (arm == 1 and residual == "arm") else r0
        return b0 + bz * z + bm * m + bzm * zm + bx * x + ba * a + br * r + eta

    y0 = outcome(0, z0, m0, eta0)
    y1 = outcome(1, z1, m1, eta1)
    y1m0 = outcome(1, z1, m0, eta1)

    treated = t == 1
    covs = {"x": x}
    if spec.a_law:
        covs["a"] = a
    if "l" in extra:
        covs["l"] = extra["l"]
    data = Dataset(
        t=t,
        m=np.where(treated, m1, m0),
        y=np.where(treated, y1, y0),
        covariates=covs,
        z=np.where(treated, z1, z0),
        z0=np.where(treated, z0, np.nan),
    )
    return SimDataset(data, z0, z1, m0, m1, y0, y1, y1m0, r0, r1)


def true_effects(spec: ScenarioSpec, n_eval: int = 5_000_000, rng: RngStream | None = None,
                 chunk: int = 500_000, interaction: str = "arm", residual: str = "arm"):
    """Benchmark (NIE, NDE) averaged directly over simulated potential outcomes."""
    if n_eval < 1:
        raise InvalidArgumentError("n_eval must be positive")
    rng = RngStream(0) if rng is None else rng
    nie = nde = 0.0
    done = 0
    block = 0
    while done < n_eval:
        size = min(chunk, n_eval - done)
        sim = generate(spec, rng.substream("truth", block), n=size, interaction=interaction,
                       residual=residual)
        nie += float(np.sum(sim.y1 - sim.y1m0))
        nde += float(np.sum(sim.y1m0 - sim.y0))
        done += size
        block += 1
    return nie / n_eval, nde / n_eval


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def default_rho_grid(spec: ScenarioSpec, count: int = 21, lo: float = -1.0, hi: float = 1.0):
    """Evenly spaced grid over [lo, hi] with the true rho inserted.

    Binary confounders cannot be evaluated at |rho| = 1, so endpoints are
    pulled in to +-0.999 for them.
    """
    grid = np.linspace(lo, hi, count)
    if spec.z_kind == "binary":
        grid = np.clip(grid, -0.999, 0.999)
    grid = np.unique(np.round(np.append(grid, spec.true_rho), 12))
    return [float(r) for r in grid]


def analysis_config(spec: ScenarioSpec, n_boot: int = 0, k_imputations: int = 25,
                    quadrature_order: int = 10) -> EstimatorConfig:
    return EstimatorConfig(
        mediator_covariates=spec.mediator_covariates,
        z_covariates=spec.z_predictors,
        z_kind=spec.z_kind,
        k_imputations=k_imputations,
        quadrature_order=quadrature_order,
        n_boot=n_boot,
        within_se="bootstrap" if n_boot > 0 else "linearized",
        within_boot=min(n_boot, 100),
    )


ROW_FIELDS = ("replication", "estimator", "rho", "nie", "nde", "nie_se", "nde_se", "status")


def analyze_replication(data: Dataset, cfg: EstimatorConfig, estimators: Sequence[str],
                        rho_grid: Sequence[float], rng: RngStream) -> list:
    """Estimator rows ``(estimator, rho, nie, nde, nie_se, nde_se)`` for one dataset.

    Uses the same entry points and RNG substreams as ``rmpwsens analyze``, so
    an emitted replication re-analysed from CSV reproduces these rows. Any
    failure (including one at a single rho) propagates.
    """
    rows = []
    for name, fn in (("naive", estimate_naive), ("oracle", estimate_oracle)):
        if name in estimators:
            e = fn(data, cfg=cfg, rng=rng)
            rows.append((name, None, e.nie, e.nde, e.nie_se, e.nde_se))
    for method in ("integration", "imputation"):
        if method not in estimators:
            continue
        res = sensitivity_curve(data, None, rho_grid, method, cfg, rng, include_initial=False)
        if res.errors:
            rho, msg = next(iter(res.errors.items()))
            raise NumericalError(f"{method} failed at rho={rho}: {msg}")
        for rho, e in res.grid:
            rows.append((method, rho, e.nie, e.nde, e.nie_se, e.nde_se))
    return rows


def replication_streams(master_seed: int, rep: int):
    """(generation stream, analysis stream) of replication ``rep``."""
    root = RngStream(master_seed).substream("replication", rep)
    return root.substream("generate"), root.substream("analysis")


def _run_one(args):
    spec, n, cfg, estimators, rho_grid, master_seed, rep = args
    gen_rng, ana_rng = replication_streams(master_seed, rep)
    try:
        sim = generate(spec, gen_rng, n=n)
        rows = analyze_replication(sim.data, cfg, estimators, rho_grid, ana_rng)
    except RmpwError as exc:
        return rep, [], f"{type(exc).__name__}: {exc}"
    return rep, rows, None


def _threads() -> int:
    raw = os.environ.get("RMPW_THREADS")
    cpus = os.cpu_count() or 1
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise InvalidArgumentError("RMPW_THREADS must be an integer") from None
    return max(1, min(value, cpus))


@dataclass
class MonteCarloSummary:
    scenario: str
    replications: int
    n: int
    true_rho: float
    rho_grid: list
    estimators: dict
    failures: dict = field(default_factory=dict)
    true_nie: float | None = None
    true_nde: float | None = None
    rows: list = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.replications

    @property
    def valid(self) -> bool:
        return self.failure_rate <= 0.02

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "replications": self.replications,
            "n": self.n,
            "true_rho": self.true_rho,
            "rho_grid": self.rho_grid,
            "true_nie": self.true_nie,
            "true_nde": self.true_nde,
            "valid": self.valid,
            "failed_replications": len(self.failures),
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
            "estimators": self.estimators,
        }

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
        return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _sd(v):
    return float(np.std(v, ddof=1)) if len(v) > 1 else float("nan")


def _aggregate(rows, estimators, true_rho, reps_ok):
    out = {}
    for est in estimators:
        mine = [r for r in rows if r[1] == est]
        if est in ("naive", "oracle"):
            at = mine
        else:
            at = [r for r in mine if r[2] is not None and abs(r[2] - true_rho) < 1e-9]
        entry = {}
        for j, name in ((3, "nie"), (4, "nde")):
            vals = np.array([r[j] for r in at], dtype=float)
            ses = np.array([r[j + 2] for r in at], dtype=float)
            entry[f"mean_{name}"] = float(vals.mean()) if vals.size else float("nan")
            entry[f"sd_{name}"] = _sd(vals)
            entry[f"mean_{name}_se"] = float(np.mean(ses)) if ses.size and np.all(np.isfinite(ses)) \
                else float("nan")
            if est in ("imputation", "integration"):
                lows, highs = [], []
                for rep in reps_ok:
                    v = [r[j] for r in mine if r[0] == rep]
                    if v:
                        lows.append(min(v))
                        highs.append(max(v))
                entry[f"mean_{name}_bounds"] = [float(np.mean(lows)), float(np.mean(highs))] \
                    if lows else [float("nan"), float("nan")]
        entry["count"] = len(at)
        out[est] = entry
    return out


def run_monte_carlo(spec: ScenarioSpec, replications: int, estimators: Sequence[str] = ESTIMATORS,
                    master_seed: int = 0, rho_grid: Sequence[float] | None = None,
                    n: int | None = None, cfg: EstimatorConfig | None = None,
                    true_effects_n: int = 0) -> MonteCarloSummary:
    """Replicate ``spec`` and aggregate per-estimator means, SDs and bounds.

    Replications are independent work items with their own RNG substreams
    (parallel up to ``RMPW_THREADS`` processes); results do not depend on the
    degree of parallelism. A failing replication is recorded and skipped.
    """
    if int(replications) != replications or replications < 1:
        raise InvalidArgumentError("replications must be a positive integer")
    for e in estimators:
        if e not in ESTIMATORS:
            raise InvalidArgumentError(f"unknown estimator {e!r}")
    estimators = tuple(e for e in ESTIMATORS if e in estimators)
    n = spec.n if n is None else int(n)
    cfg = analysis_config(spec) if cfg is None else cfg
    grid = default_rho_grid(spec) if rho_grid is None else [float(r) for r in rho_grid]
    if not any(abs(r - spec.true_rho) < 1e-9 for r in grid):
        grid = sorted(grid + [float(spec.true_rho)])
    jobs = [(spec, n, cfg, estimators, grid, master_seed, i) for i in range(int(replications))]
    threads = _threads()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    rows, failures, ok = [], {}, []
    for rep, rep_rows, err in results:
        if err is not None:
            failures[rep] = err
            rows.append((rep, "", None, float("nan"), float("nan"), float("nan"), float("nan"),
                         err))
            continue
        ok.append(rep)
        for est, rho, nie, nde, s1, s2 in rep_rows:
            rows.append((rep, est, rho, float(nie), float(nde), float(s1), float(s2), "ok"))
    good = [r for r in rows if r[7] == "ok"]
    summary = MonteCarloSummary(
        scenario=spec.id, replications=int(replications), n=n, true_rho=spec.true_rho,
        rho_grid=grid, estimators=_aggregate(good, estimators, spec.true_rho, ok),
        failures=failures, rows=rows,
    )
    if true_effects_n > 0:
        summary.true_nie, summary.true_nde = true_effects(
            spec, true_effects_n, RngStream(master_seed).substream("truth"))
    return summary
