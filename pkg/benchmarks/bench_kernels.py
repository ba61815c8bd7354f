"""Compiled vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py --sizes 64 256 1024 --repeat 5

The first compiled call (JIT compilation, or a cache load) is excluded; each
cell is the best of ``--repeat`` runs.
"""

import argparse
import time

import numpy as np

from udi import _kernels


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, d, rng):
    mu = rng.standard_normal((n, d))
    lv = 0.3 * rng.standard_normal((n, d))
    y = rng.standard_normal((n, d))
    g = rng.standard_normal((n, n))
    xi = rng.integers(0, 10, size=50 * n)
    yi = rng.integers(0, 10, size=50 * n)
    return {
        "pairwise_logpdf": lambda nb: _kernels.pairwise_gauss_logpdf(mu, lv, y, use_numba=nb),
        "pairwise_logpdf_grad": lambda nb: _kernels.pairwise_gauss_logpdf_grad(mu, lv, y, g, use_numba=nb),
        "joint_histogram": lambda nb: _kernels.joint_histogram(xi, yi, 10, 10, use_numba=nb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba path disabled (UDI_DISABLE_NUMBA set or numba missing); numpy timings only")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>9}{'max |diff|':>13}")
    for n in args.sizes:
        for name, fn in cases(n, args.dim, rng).items():
            t_np = best_time(lambda: fn(False), args.repeat)
            if _kernels.HAVE_NUMBA:
                fn(True)  # compile or load from cache
                t_nb = best_time(lambda: fn(True), args.repeat)
                a, b = fn(False), fn(True)
                pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
                diff = max(float(np.max(np.abs(u - v))) for u, v in pairs)
                print(f"{name:<22}{n:>6}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>9.1f}{diff:>13.2e}")
            else:
                print(f"{name:<22}{n:>6}{1e3 * t_np:>12.3f}{'-':>12}{'-':>9}{'-':>13}")


if __name__ == "__main__":
    main()
