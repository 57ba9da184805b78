"""Find the Gaussian-copula correlation giving Pearson correlation 0.2 between
Gamma(shape 0.5, rate 1) and Gamma(shape 0.8, rate 2) marginals.

With latent normals (U, V) of correlation r and quantile maps f, g,
E[f(U) g(V)] = E_U[f(U) E[g(rU + sW)]] where s = sqrt(1 - r**2) and W is an
independent standard normal. The inner expectation uses a 120-point
Gauss-Hermite rule, the outer one adaptive quadrature. The root in r is found
with brentq and checked by a 10**7-draw Monte Carlo. Prints the constant
stored in ``rmpwsens.simulation``.
"""

import math

import numpy as np
from scipy import integrate, optimize, special, stats

SHAPES = (0.5, 0.8)
RATES = (1.0, 2.0)
TARGET = 0.2
NODES, WEIGHTS = np.polynomial.hermite_e.hermegauss(120)
WEIGHTS = WEIGHTS / math.sqrt(2.0 * math.pi)


def quantile(arm, u):
    # isf of the upper tail keeps the map finite far out in the right tail
    return stats.gamma.isf(special.ndtr(-u), SHAPES[arm], scale=1.0 / RATES[arm])


def pearson(r):
    s = math.sqrt(1.0 - r * r)
    mean0, mean1 = SHAPES[0] / RATES[0], SHAPES[1] / RATES[1]
    sd0, sd1 = math.sqrt(SHAPES[0]) / RATES[0], math.sqrt(SHAPES[1]) / RATES[1]

    def integrand(u):
        inner = np.dot(WEIGHTS, quantile(1, r * u + s * NODES))
        return math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi) * quantile(0, u) * inner

    cross, _ = integrate.quad(integrand, -10.0, 10.0, limit=400, epsabs=1e-13)
    return (cross - mean0 * mean1) / (sd0 * sd1)


def main():
    r = optimize.brentq(lambda v: pearson(v) - TARGET, 0.0, 0.9, xtol=1e-10)
    print(f"copula correlation: {r:.6f}")

    rng = np.random.default_rng(20240101)
    n = 10_000_000
    u = rng.standard_normal(n)
    v = r * u + math.sqrt(1 - r * r) * rng.standard_normal(n)
    g0, g1 = quantile(0, u), quantile(1, v)
    print(f"Monte Carlo Pearson correlation at n={n}: {np.corrcoef(g0, g1)[0, 1]:.5f}")


if __name__ == "__main__":
    main()
