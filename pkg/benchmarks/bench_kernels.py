"""
Time the numba and numpy versions of the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Split training is the 500-epoch variational optimizer run at every internal
node; routing is the Monte-Carlo descent run once per predicted row.  Both
paths are also checked to agree before timing.
"""
import argparse
import time

import numpy as np

from vspyct_gp import kernels
from vspyct_gp.datasets import load_bundled
from vspyct_gp.tree import TreeConfig, fit_tree


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_split(n, d, epochs, repeats):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, d))
    y = X @ rng.standard_normal(d) + 0.1 * rng.standard_normal(n)
    y = (y - y.mean()) / y.std()
    mu0 = np.append(rng.standard_normal(d), 0.0)
    s0 = np.full(d + 1, -2.0)
    eps = rng.standard_normal((epochs, d + 1))
    args = (X, y, mu0, s0, eps, 0.01, 1.0 / n)
    kernels._train_split_numba(*args)  # compile
    a = kernels._train_split_numba(*args)
    b = kernels._train_split_numpy(*args)
    diff = max(np.max(np.abs(a[0] - b[0])), np.max(np.abs(a[1] - b[1])))
    return (best_time(lambda: kernels._train_split_numba(*args), repeats),
            best_time(lambda: kernels._train_split_numpy(*args), repeats), diff)


def bench_route(tree, rows, M, repeats):
    ra = tree.routing_arrays
    rng = np.random.default_rng(1)
    xs = rng.standard_normal((rows, tree.n_features))
    noise = rng.standard_normal((rows, M, ra.n_internal, tree.n_features + 1))
    common = (ra.left, ra.right, ra.leaf_of, ra.split_of, ra.W_mean, ra.W_std, ra.b_mean, ra.b_std)

    def run(fn):
        return [fn(*common, xs[i], noise[i], ra.depth) for i in range(rows)]

    a, b = run(kernels._route_numba), run(kernels._route_numpy)
    agree = all(np.array_equal(u, v) for u, v in zip(a, b))
    return (best_time(lambda: run(kernels._route_numba), repeats),
            best_time(lambda: run(kernels._route_numpy), repeats), agree)


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()

    print(f"{'kernel':<32}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}  check")
    for n, d in ((50, 3), (300, 8), (1000, 8)):
        tn, tp, diff = bench_split(n, d, 500, args.repeats)
        print(f"{f'train_split n={n} d={d}':<32}{1e3 * tn:12.2f}{1e3 * tp:12.2f}{tp / tn:10.1f}"
              f"  max|diff|={diff:.1e}")

    tree = fit_tree(load_bundled("energy_like"), TreeConfig(gp_iters=0))
    rows = 200
    tn, tp, agree = bench_route(tree, rows, 50, args.repeats)
    print(f"{f'route {rows} rows M=50 depth={tree.depth()}':<32}{1e3 * tn:12.2f}{1e3 * tp:12.2f}"
          f"{tp / tn:10.1f}  leaves equal={agree}")


if __name__ == "__main__":
    main()
