"""Time the numba and pure-numpy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Both flavours are importable regardless of RMPWSENS_DISABLE_NUMBA, so one
run compares them side by side and checks they agree.
"""
import argparse
import time

import numpy as np

from rmpwsens import kernels
from rmpwsens.numerics import gauss_hermite_rule


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    n = args.n

    x, y = rng.normal(size=n), rng.normal(size=n)
    rho = rng.uniform(-0.999, 0.999, size=n)

    m = (rng.random(n) < 0.5).astype(np.int64)
    lin0 = rng.normal(scale=0.5, size=n)
    mean, sd = rng.normal(size=n), np.full(n, 0.6)
    p_den = rng.uniform(0.1, 0.9, size=n)
    rule = gauss_hermite_rule(10)

    cases = {
        "bvn_cdf": (lambda: kernels.bvn_cdf_numpy(x, y, rho),
                    None if kernels.bvn_cdf_numba is None
                    else lambda: kernels.bvn_cdf_numba(x, y, rho)),
        "integrated_weights": (
            lambda: kernels.integrated_weights_numpy(m, lin0, 0.8, mean, sd, p_den,
                                                     rule.nodes, rule.weights)[0],
            None if kernels.integrated_weights_numba is None
            else lambda: kernels.integrated_weights_numba(m, lin0, 0.8, mean, sd, p_den,
                                                          rule.nodes, rule.weights)[0]),
    }
    print(f"n = {n}, active backend: {kernels.BACKEND}")
    for name, (np_fn, nb_fn) in cases.items():
        t_np = best_of(np_fn, args.repeat)
        line = f"{name:20s} numpy {t_np * 1e3:9.2f} ms"
        if nb_fn is not None:
            t_nb = best_of(nb_fn, args.repeat)
            diff = float(np.max(np.abs(np_fn() - nb_fn())))
            line += f"   numba {t_nb * 1e3:9.2f} ms   speed-up {t_np / t_nb:5.1f}x   max diff {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
