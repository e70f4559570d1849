"""Time the subset-basis kernel (numba vs numpy) and dense vs streaming accumulation.

    python benchmarks/bench_kernels.py [--repeat 20]

The numba path is warmed up once before timing so compilation is excluded.
"""

import argparse
import time

import numpy as np

from csa2sls import _kernels
from csa2sls.dataframe import ModelFrame
from csa2sls.estimators import accumulate_projection_stats
from csa2sls.subsets import build_subset_plan

CASES = [(100, 10, 5), (100, 20, 10), (500, 20, 10), (2000, 20, 10)]


def frame_for(N, K, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((N, K))
    Y = Z.sum(axis=1) * 0.2 + rng.standard_normal(N)
    y = 0.1 * Y + rng.standard_normal(N)
    return ModelFrame.from_arrays(y, Y, Z)


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    print(f"default backend: {_kernels.BACKEND}")
    print(f"{'N':>6} {'K':>4} {'k':>4} {'M':>5} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for N, K, k in CASES:
        f = frame_for(N, K)
        plan = build_subset_plan(K, k)
        Z, W, S = f.Z_excl, f.W, plan.subsets
        t_np = best_of(lambda: _kernels.subset_bases(Z, W, S, 1e-10, backend="numpy"), args.repeat)
        if _kernels.HAVE_NUMBA:
            t_nb = best_of(lambda: _kernels.subset_bases(Z, W, S, 1e-10, backend="numba"), args.repeat)
            ratio = f"{t_np / t_nb:7.2f}x"
            nb = f"{1e3 * t_nb:10.2f}"
        else:
            nb, ratio = f"{'n/a':>10}", f"{'n/a':>8}"
        print(f"{N:>6} {K:>4} {k:>4} {plan.M:>5} {1e3 * t_np:10.2f} {nb} {ratio}")

    print()
    print(f"{'N':>6} {'dense ms':>10} {'stream ms':>10}")
    for N in (200, 1000, 2000):
        f = frame_for(N, 12)
        plan = build_subset_plan(12, 6)
        t_d = best_of(lambda: accumulate_projection_stats(f, plan, "dense"), max(3, args.repeat // 4))
        t_s = best_of(lambda: accumulate_projection_stats(f, plan, "streaming"), max(3, args.repeat // 4))
        print(f"{N:>6} {1e3 * t_d:10.2f} {1e3 * t_s:10.2f}")


if __name__ == "__main__":
    main()
