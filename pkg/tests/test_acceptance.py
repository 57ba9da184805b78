"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the "acceptance
criteria" section at the end of the pytest run. Run this file directly
(``python tests/test_acceptance.py``) to execute only these checks.
"""
import dataclasses
import math
import sys

import numpy as np
import pytest
from scipy import stats

from rmpwsens.confounder import binary_p1, rho_bounds
from rmpwsens.estimators import (
    EstimatorConfig,
    estimate_imputation,
    estimate_integration,
    estimate_naive,
    estimate_oracle,
)
from rmpwsens.glm import DesignMatrix, fit_binary_glm
from rmpwsens.numerics import RngStream, bivariate_normal_cdf, gauss_hermite_rule, std_normal_cdf
from rmpwsens.simulation import (
    SCENARIO_IDS,
    analysis_config,
    generate,
    run_monte_carlo,
    scenario_registry,
    true_effects,
)

REPS = 300


def within(value, target, tol):
    return abs(value - target) <= tol


def test_c1_rho_bounds(criterion):
    iv = rho_bounds(-0.35, -0.18)
    ok = within(iv.lower, -0.8585, 1e-4) and within(iv.upper, 0.9845, 1e-4) \
        and round(iv.lower, 2) == -0.86 and round(iv.upper, 2) == 0.98
    criterion("C1 rho bounds (-0.35, -0.18)", ok, f"[{iv.lower:.6f}, {iv.upper:.6f}]")
    assert ok


def test_c2_scenario_one_truth(criterion):
    nie, nde = true_effects(scenario_registry("1"), 5_000_000, RngStream(20240101))
    ok = within(nie, 0.352, 0.003) and within(nde, 0.962, 0.003)
    criterion("C2 scenario-1 true effects", ok, f"NIE {nie:.4f} NDE {nde:.4f}")
    assert ok


def integration_summary(sid, seed, grid=None, estimators=("integration",)):
    spec = scenario_registry(sid)
    grid = [spec.true_rho] if grid is None else grid
    return run_monte_carlo(spec, REPS, estimators=estimators, master_seed=seed, rho_grid=grid)


def test_c3_scenario_one_replication(criterion):
    s = integration_summary("1", 301)
    e = s.estimators["integration"]
    checks = [within(e["mean_nie"], 0.352, 0.010), within(e["mean_nde"], 0.961, 0.010),
              within(e["sd_nie"], 0.048, 0.25 * 0.048), within(e["sd_nde"], 0.030, 0.25 * 0.030)]
    ok = s.valid and all(checks)
    criterion("C3 scenario-1 integration at rho=0.5, 300 reps", ok,
              f"mean NIE {e['mean_nie']:.4f} NDE {e['mean_nde']:.4f}; "
              f"SD NIE {e['sd_nie']:.4f} NDE {e['sd_nde']:.4f}")
    assert ok


def test_c4_imputation_matches_integration(criterion):
    spec = scenario_registry("1")
    data = generate(spec, RngStream(404)).data
    cfg = dataclasses.replace(analysis_config(spec), k_imputations=4000)
    imp = estimate_imputation(data, None, 0.5, rng=RngStream(404, 1), cfg=cfg)
    integ = estimate_integration(data, None, 0.5, quadrature_order=10, cfg=cfg)
    d_nie, d_nde = abs(imp.nie - integ.nie), abs(imp.nde - integ.nde)
    ok = d_nie <= 0.01 and d_nde <= 0.01
    criterion("C4 K=4000 imputation vs order-10 integration", ok,
              f"|dNIE| {d_nie:.5f} |dNDE| {d_nde:.5f}")
    assert ok


def test_c5_binary_replication(criterion):
    s = integration_summary("11", 505)
    e = s.estimators["integration"]
    ok = s.valid and within(e["mean_nie"], -0.427, 0.010) and within(e["mean_nde"], 0.506, 0.012)
    criterion("C5 scenario-11 integration at rho=0.5, 300 reps", ok,
              f"mean NIE {e['mean_nie']:.4f} NDE {e['mean_nde']:.4f}")
    assert ok


def test_c6_gamma_failure_mode(criterion):
    s = integration_summary("9", 606, estimators=("oracle", "integration"))
    bias = s.estimators["integration"]["mean_nie"] - s.estimators["oracle"]["mean_nie"]
    ok = s.valid and -0.030 <= bias <= -0.015
    criterion("C6 scenario-9 integration below oracle by 0.015-0.030", ok,
              f"integration {s.estimators['integration']['mean_nie']:.4f} "
              f"oracle {s.estimators['oracle']['mean_nie']:.4f} bias {bias:+.4f}")
    assert ok


def test_c7_bound_width_ordering(criterion):
    grid = np.linspace(-1, 1, 21).tolist()
    b = {sid: integration_summary(sid, 707, grid).estimators["integration"]["mean_nie_bounds"]
         for sid in ("7a", "7b")}
    wa, wb = b["7a"][1] - b["7a"][0], b["7b"][1] - b["7b"][0]
    ok = (wa > wb and within(b["7b"][0], 0.318, 0.01) and within(b["7b"][1], 0.378, 0.01)
          and within(b["7a"][0], 0.320, 0.01) and within(b["7a"][1], 0.489, 0.01))
    criterion("C7 7a bounds wider than 7b", ok,
              f"7a [{b['7a'][0]:.4f}, {b['7a'][1]:.4f}] 7b [{b['7b'][0]:.4f}, {b['7b'][1]:.4f}]")
    assert ok


def test_c8_exact_identities(criterion):
    rng = np.random.default_rng(808)
    worst_identity = 0.0
    collapse_ok = True
    for i in range(100):
        sid = str(rng.choice(SCENARIO_IDS))
        spec = scenario_registry(sid)
        data = generate(spec, RngStream(808, i), n=int(rng.integers(400, 1500))).data
        cfg = dataclasses.replace(analysis_config(spec, k_imputations=3))
        rho = float(rng.uniform(-0.95, 0.95))
        ate = data.y[data.treated].mean() - data.y[data.control].mean()
        ests = [estimate_naive(data, cfg=cfg), estimate_oracle(data, cfg=cfg),
                estimate_integration(data, None, rho, cfg=cfg),
                estimate_imputation(data, None, rho, rng=RngStream(808, i), cfg=cfg)]
        worst_identity = max([worst_identity] + [abs(e.nie + e.nde - ate) for e in ests])
        flat = dataclasses.replace(cfg, z_in_mediator_models=False)
        naive = estimate_naive(data, cfg=flat)
        for e in (estimate_integration(data, None, rho, cfg=flat),
                  estimate_imputation(data, None, rho, rng=RngStream(808, i), cfg=flat)):
            collapse_ok &= e.nie == naive.nie and e.nde == naive.nde
    mu0 = rng.uniform(-3, 3, 1000)
    mu1 = rng.uniform(-3, 3, 1000)
    rho = rng.uniform(-0.99, 0.99, 1000)
    total = [abs(float(binary_p1(a, b, 1, r)) * std_normal_cdf(b)
                 + float(binary_p1(a, b, 0, r)) * std_normal_cdf(-b) - std_normal_cdf(a))
             for a, b, r in zip(mu0, mu1, rho)]
    ok = worst_identity <= 1e-12 and collapse_ok and max(total) <= 1e-9
    criterion("C8 exact identities", ok,
              f"max |nie+nde-ate| {worst_identity:.1e}; collapse exact {collapse_ok}; "
              f"max total-probability error {max(total):.1e}")
    assert ok


def test_c9_numerical_kernels(criterion):
    bvn_err = abs(bivariate_normal_cdf(0.0, 0.0, 0.5) - 1.0 / 3.0)
    rule = gauss_hermite_rule(10)
    gh_err = 0.0
    for k in range(0, 20):
        got = float(np.dot(rule.weights, rule.nodes**k))
        exact = 0.0 if k % 2 else math.gamma((k + 1) / 2)
        scale = exact if exact else float(np.dot(rule.weights, np.abs(rule.nodes) ** k))
        gh_err = max(gh_err, abs(got - exact) / scale)
    rng = np.random.default_rng(909)
    score_err = 0.0
    for i in range(50):
        link = "logit" if i % 2 == 0 else "probit"
        n, p = int(rng.integers(200, 3000)), int(rng.integers(1, 5))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
        eta = X @ rng.uniform(-1, 1, p + 1)
        prob = 1 / (1 + np.exp(-eta)) if link == "logit" else stats.norm.cdf(eta)
        y = (rng.random(n) < prob).astype(float)
        fit = fit_binary_glm(DesignMatrix(X, ["(intercept)"] + [f"x{j}" for j in range(p)]), y, link)
        e = X @ fit.coefficients
        if link == "logit":
            score = X.T @ (y - 1 / (1 + np.exp(-e)))
        else:
            q = 2 * y - 1
            score = X.T @ (q * np.exp(stats.norm.logpdf(q * e) - stats.norm.logcdf(q * e)))
        score_err = max(score_err, float(np.max(np.abs(score))))
    ok = bvn_err <= 1e-10 and gh_err <= 1e-10 and score_err <= 1e-8
    criterion("C9 numerical kernels", ok,
              f"bvn {bvn_err:.1e}; GH rel {gh_err:.1e}; max score {score_err:.1e}")
    assert ok


def test_c10_bootstrap_validity(criterion):
    spec = scenario_registry("1")
    data = generate(spec, RngStream(1010)).data
    cfg = analysis_config(spec, n_boot=200)
    est = estimate_integration(data, None, 0.5, cfg=cfg, rng=RngStream(1010, 1))
    ok = within(est.nie_se, 0.048, 0.30 * 0.048)
    criterion("C10 bootstrap SE of integration NIE (b=200)", ok, f"SE {est.nie_se:.4f}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
