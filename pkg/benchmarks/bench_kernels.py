"""Compare the compiled kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--n 2048]

Both modules are imported directly, so the benchmark does not depend on
which backend propci selected at import time.
"""
import argparse
import importlib
import time

import numpy as np

from propci import _kernels_py
from propci import numerics as nm
from propci.evaluation import RandomProportionModel, pmf_logit_support


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(k, n):
    x_all = range(1, n)
    half = 0.5 * nm.normal_quantile(0.975) ** 2

    def betainc():
        for a in range(1, 2001):
            k.betainc(a, 2048 - a, 0.3)

    def midp():
        for x in x_all:
            k.midp_lower(x, n, 0.05)

    def lr():
        for x in x_all:
            k.lr_lower(x, n, half)

    def blaker():
        for x in range(1, min(n, 512)):
            k.blaker_lower(x, min(n, 512), 0.05, 256)

    model = RandomProportionModel(8.0 / n, 1.2)
    lower = np.ascontiguousarray(nm.logit(np.clip(np.arange(n + 1) / n - 0.01, 1e-9, 1 - 1e-9)))
    upper = np.ascontiguousarray(nm.logit(np.clip(np.arange(n + 1) / n + 0.01, 1e-9, 1 - 1e-9)))
    t_lo, t_hi = pmf_logit_support(n)
    nodes, weights = nm.gauss_legendre(64)
    marginal = np.empty(n + 1)

    def local_average():
        for _ in range(20):
            k.local_average_sums(n, lower, upper, t_lo, t_hi, nm.log_choose_row(n), model.mu,
                                 model.sigma, nodes, weights, nm.TRUNCATION_SPAN, marginal)

    return {"betainc x2000": betainc, f"midp table n={n}": midp, f"LR table n={n}": lr,
            f"blaker table n={min(n, 512)}": blaker, f"local-average sums n={n} x20": local_average}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--n", type=int, default=2048)
    args = parser.parse_args()
    try:
        compiled = importlib.import_module("propci._kernels")
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the fallback only")
    py_cases = cases(_kernels_py, args.n)
    cy_cases = cases(compiled, args.n) if compiled else {}
    print(f"{'kernel':<30}{'python [s]':>12}{'compiled [s]':>14}{'speed-up':>10}")
    for name, fn in py_cases.items():
        t_py = best_of(fn, args.repeat)
        if name in cy_cases:
            t_cy = best_of(cy_cases[name], args.repeat)
            print(f"{name:<30}{t_py:>12.4f}{t_cy:>14.4f}{t_py / t_cy:>9.1f}x")
        else:
            print(f"{name:<30}{t_py:>12.4f}{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
