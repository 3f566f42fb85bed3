#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy fallback.

Times the two hot primitives (per-point symmetric sums for additive
truncations, per-cardinality log tables for multiplicative truncations) and
one end-to-end workload (order-1..5 truncated-product evaluation at QMC
points for the 10-dimensional sum function).

Run:  python benchmarks/bench_kernels.py [--points 65536] [--repeats 3]
"""

import argparse
import time

import numpy as np

from dimdecomp import _kernels_py as kpy
from dimdecomp._kernels import KERNEL_BACKEND, assemble_product
from dimdecomp.subsets import product_truncation_exponents

try:
    from dimdecomp import _kernels_cy as kcy
except ImportError:
    kcy = None


def timeit(func, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(points, repeats):
    rng = np.random.default_rng(0)
    dim, s_max = 10, 5
    impls = [("python", kpy)] + ([("cython", kcy)] if kcy is not None else [])

    print(f"active backend: {KERNEL_BACKEND}; points={points}, N={dim}, S<={s_max}")
    header = f"{'kernel':<28}" + "".join(f"{name:>12}" for name, _ in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)

    sel = rng.normal(size=(points, dim))
    unsel = rng.uniform(0.3, 1.0, size=dim)
    times = [timeit(lambda m=mod: m.esym_tables(sel, unsel, s_max), repeats)
             for _, mod in impls]
    row = f"{'esym_tables':<28}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
    if len(times) == 2:
        row += f"{times[0] / times[1]:>9.1f}x"
    print(row)

    G = rng.normal(size=(points, dim)) * 0.2
    mu = np.full(dim, 0.5)
    times = [
        timeit(
            lambda m=mod: m.restriction_log_tables(
                None, G, np.zeros(dim), mu, 0.0, 0.0, s_max, 1e-300
            ),
            repeats,
        )
        for _, mod in impls
    ]
    row = f"{'restriction_log_tables':<28}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
    if len(times) == 2:
        row += f"{times[0] / times[1]:>9.1f}x"
    print(row)

    # end to end: order-1..5 truncated products of the 10-d sum function
    exps = [product_truncation_exponents(dim, s) for s in range(1, s_max + 1)]

    def end_to_end(mod):
        L, neg, bad = mod.restriction_log_tables(
            None, G, np.zeros(dim), mu, 0.0, 0.0, s_max, 1e-300
        )
        assert bad is None
        return [assemble_product(L, neg, c) for c in exps]

    times = [timeit(lambda m=mod: end_to_end(m), repeats) for _, mod in impls]
    row = f"{'truncations S=1..5':<28}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
    if len(times) == 2:
        row += f"{times[0] / times[1]:>9.1f}x"
    print(row)

    if kcy is not None:
        a = end_to_end(kcy)
        b = end_to_end(kpy)
        worst = max(
            float(np.max(np.abs(x - y) / np.maximum(np.abs(y), 1e-300)))
            for x, y in zip(a, b)
        )
        print(f"max relative disagreement between backends: {worst:.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=1 << 16)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    bench(args.points, args.repeats)
