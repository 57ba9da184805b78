import math

import numpy as np
import pytest
from scipy import optimize, stats

from rmpwsens.errors import (
    DegenerateVarianceError,
    InvalidArgumentError,
    SeparationError,
    SingularDesignError,
)
from rmpwsens.glm import (
    DesignMatrix,
    fit_binary_glm,
    fit_bivariate_probit,
    fit_linear,
    partial_correlation,
    predict_prob,
)


def logit_score(X, y, beta):
    return X.T @ (y - 1.0 / (1.0 + np.exp(-(X @ beta))))


def probit_score(X, y, beta):
    q = 2 * y - 1
    qe = q * (X @ beta)
    return X.T @ (q * np.exp(stats.norm.logpdf(qe) - stats.norm.logcdf(qe)))


def random_binary_problem(seed, link, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(200, 3000))
    p = int(rng.integers(1, 5))
    X = np.column_stack([np.ones(n), rng.normal(0, 1, (n, p))])
    beta = rng.uniform(-1, 1, p + 1)
    eta = X @ beta
    prob = 1 / (1 + np.exp(-eta)) if link == "logit" else stats.norm.cdf(eta)
    y = (rng.random(n) < prob).astype(float)
    names = ["(intercept)"] + [f"x{i}" for i in range(p)]
    return DesignMatrix(X, names), y


class TestLinear:
    def test_exact_fit(self):
        x = np.arange(10.0)
        d = DesignMatrix.from_columns({"x": x})
        fit = fit_linear(d, 3.0 - 2.0 * x)
        assert np.allclose(fit.coefficients, [3.0, -2.0], atol=1e-12)
        assert np.max(np.abs(fit.residuals)) <= 1e-12
        assert fit.residual_sd <= 1e-12

    def test_intercept_only_is_mean(self):
        y = np.array([1.0, 4.0, 2.5, 7.0])
        fit = fit_linear(DesignMatrix.intercept_only(4), y)
        assert abs(fit.coefficients[0] - y.mean()) <= 1e-14

    def test_hand_dataset(self):
        # x = 0..4, y = (1, 3, 2, 5, 4): Sxx = 10, Sxy = 8, slope 0.8, intercept 3 - 0.8*2
        x = np.array([0.0, 1, 2, 3, 4])
        y = np.array([1.0, 3, 2, 5, 4])
        fit = fit_linear(DesignMatrix.from_columns({"x": x}), y)
        assert np.allclose(fit.coefficients, [1.4, 0.8], atol=1e-12)
        resid = y - (1.4 + 0.8 * x)
        assert abs(fit.residual_sd - math.sqrt(resid @ resid / 3)) <= 1e-12
        ml = fit_linear(DesignMatrix.from_columns({"x": x}), y, dof_corrected=False)
        assert abs(ml.residual_sd - math.sqrt(resid @ resid / 5)) <= 1e-12

    def test_residuals_orthogonal(self):
        rng = np.random.default_rng(1)
        d = DesignMatrix.from_columns({"a": rng.normal(size=500), "b": rng.normal(size=500)})
        fit = fit_linear(d, rng.normal(size=500))
        assert np.max(np.abs(d.values.T @ fit.residuals)) <= 1e-8

    def test_shift_changes_intercept_only(self):
        rng = np.random.default_rng(2)
        d = DesignMatrix.from_columns({"a": rng.normal(size=300)})
        y = rng.normal(size=300)
        f1, f2 = fit_linear(d, y), fit_linear(d, y + 17.0)
        assert abs(f2.coefficients[0] - f1.coefficients[0] - 17.0) <= 1e-10
        assert abs(f2.coefficients[1] - f1.coefficients[1]) <= 1e-10

    def test_rank_deficiency_names_column(self):
        a = np.arange(6.0)
        d = DesignMatrix.from_columns({"a": a, "b": 2 * a + 1})
        with pytest.raises(SingularDesignError, match="b"):
            fit_linear(d, a)


class TestBinaryGlm:
    def test_intercept_only_logit(self):
        y = np.array([1.0] * 30 + [0.0] * 70)
        fit = fit_binary_glm(DesignMatrix.intercept_only(100), y, "logit")
        assert abs(fit.coefficients[0] - math.log(0.3 / 0.7)) <= 1e-6
        assert fit.converged

    def test_intercept_only_probit(self):
        y = np.array([1.0, 0.0] * 50)
        fit = fit_binary_glm(DesignMatrix.intercept_only(100), y, "probit")
        assert abs(fit.coefficients[0]) <= 1e-10

    def test_recovery(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=20000)
        y = (rng.random(20000) < 1 / (1 + np.exp(-x))).astype(float)
        fit = fit_binary_glm(DesignMatrix.from_columns({"x": x}), y, "logit")
        assert np.all(np.abs(fit.coefficients - [0.0, 1.0]) <= 0.05)

    @pytest.mark.parametrize("link", ["logit", "probit"])
    def test_matches_direct_optimisation(self, link):
        d, y = random_binary_problem(40, link, n=800)
        X = d.values

        def negll(b):
            eta = X @ b
            if link == "logit":
                return float(np.sum(np.logaddexp(0, eta) - y * eta))
            return -float(np.sum(stats.norm.logcdf((2 * y - 1) * eta)))

        ref = optimize.minimize(negll, np.zeros(X.shape[1]), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000,
                                         "maxfev": 40000})
        fit = fit_binary_glm(d, y, link)
        assert np.max(np.abs(fit.coefficients - ref.x)) <= 1e-4
        assert -fit.log_likelihood <= ref.fun + 1e-9

    @pytest.mark.parametrize("link", ["logit", "probit"])
    def test_score_equations(self, link):
        for seed in range(10):
            d, y = random_binary_problem(seed, link)
            fit = fit_binary_glm(d, y, link)
            score = (logit_score if link == "logit" else probit_score)(d.values, y, fit.coefficients)
            assert fit.converged
            assert np.max(np.abs(score)) <= 1e-8

    def test_separation(self):
        x = np.linspace(-1, 1, 40)
        y = (x > 0).astype(float)
        with pytest.raises(SeparationError):
            fit_binary_glm(DesignMatrix.from_columns({"x": x}), y, "logit")

    def test_single_class(self):
        with pytest.raises(InvalidArgumentError):
            fit_binary_glm(DesignMatrix.intercept_only(10), np.ones(10))

    def test_ridge_is_opt_in_and_tames_separation(self):
        x = np.linspace(-1, 1, 40)
        y = (x > 0).astype(float)
        fit = fit_binary_glm(DesignMatrix.from_columns({"x": x}), y, "logit", ridge=1.0)
        assert fit.converged and np.all(np.isfinite(fit.coefficients))


class TestPredictProb:
    def test_examples(self):
        d = DesignMatrix.intercept_only(4)
        y = np.array([0.0, 1.0, 0.0, 1.0])
        for link in ("logit", "probit"):
            fit = fit_binary_glm(d, y, link)
            assert abs(predict_prob(fit, [1.0]) - 0.5) <= 1e-10
        logit = fit_binary_glm(d, y, "logit")
        probit = fit_binary_glm(d, y, "probit")
        from dataclasses import replace

        assert abs(predict_prob(replace(logit, coefficients=np.array([0.8473])), [1.0]) - 0.7) <= 1e-5
        assert abs(predict_prob(replace(probit, coefficients=np.array([1.959964])), [1.0])
                   - 0.975) <= 1e-6
        with pytest.raises(InvalidArgumentError):
            predict_prob(logit, [1.0, 2.0])


class TestBivariateProbit:
    def _latent(self, seed, rho, n=20000):
        rng = np.random.default_rng(seed)
        x = rng.choice([-1.0, 0.0, 1.0, 1.5], p=[0.25, 0.25, 0.2, 0.3], size=n)
        e = rng.multivariate_normal([0, 0], [[1, rho], [rho, 1]], size=n)
        y1 = (0.2 * x + e[:, 0] > 0).astype(float)
        y2 = (0.3 - 0.2 * x + e[:, 1] > 0).astype(float)
        return DesignMatrix.from_columns({"x": x}), y1, y2

    def test_independent(self):
        d, y1, y2 = self._latent(8, 0.0)
        fit = fit_bivariate_probit(d, y1, y2)
        assert abs(fit.rho) <= 0.03
        assert fit.converged and fit.gradient_norm <= 1e-6

    def test_latent_correlation(self):
        d, y1, y2 = self._latent(9, 0.5)
        fit = fit_bivariate_probit(d, y1, y2)
        assert abs(fit.rho - 0.5) <= 0.05
        assert np.allclose(fit.coefficients_1, [0.0, 0.2], atol=0.05)
        assert np.allclose(fit.coefficients_2, [0.3, -0.2], atol=0.05)

    def test_fixed_zero_rho_reduces_to_margins(self):
        d, y1, y2 = self._latent(10, 0.4, n=3000)
        fit = fit_bivariate_probit(d, y1, y2, fixed_rho=0.0)
        m1 = fit_binary_glm(d, y1, "probit")
        m2 = fit_binary_glm(d, y2, "probit")
        assert np.max(np.abs(fit.coefficients_1 - m1.coefficients)) <= 1e-6
        assert np.max(np.abs(fit.coefficients_2 - m2.coefficients)) <= 1e-6

    def test_identical_responses_rejected(self):
        d, y1, _ = self._latent(11, 0.0, n=500)
        with pytest.raises(SeparationError):
            fit_bivariate_probit(d, y1, y1.copy())


class TestPartialCorrelation:
    def test_identical_vectors(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=50)
        z = x + rng.normal(size=50)
        assert abs(partial_correlation(z, z.copy(), DesignMatrix.from_columns({"x": x})) - 1.0) <= 1e-12

    def test_design_column_is_degenerate(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=50)
        with pytest.raises(DegenerateVarianceError):
            partial_correlation(rng.normal(size=50), 3 * x - 1, DesignMatrix.from_columns({"x": x}))

    def test_hand_dataset(self):
        # two simple regressions on x = 0..5 done by hand: Sxx = 17.5 and both
        # Sxz and Sxc equal 15.5
        x = np.arange(6.0)
        z = np.array([1.0, 2, 4, 3, 6, 5])
        c = np.array([2.0, 1, 3, 5, 4, 6])
        xm = x - 2.5
        bz = bc = 15.5 / 17.5
        rz = z - 3.5 - bz * xm
        rc = c - 3.5 - bc * xm
        hand = (rz @ rc) / math.sqrt((rz @ rz) * (rc @ rc))
        got = partial_correlation(z, c, DesignMatrix.from_columns({"x": x}))
        assert abs(got - hand) <= 1e-12
        pearson = np.corrcoef(z, c)[0, 1]
        assert abs(partial_correlation(z, c, DesignMatrix.intercept_only(6)) - pearson) <= 1e-12

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=200)
        z = x + rng.normal(size=200)
        c = 0.5 * z + rng.normal(size=200)
        d = DesignMatrix.from_columns({"x": x})
        r = partial_correlation(z, c, d)
        assert abs(partial_correlation(4 * z - 2, 0.1 * c + 9, d) - r) <= 1e-10
