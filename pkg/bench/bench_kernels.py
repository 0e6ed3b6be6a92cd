#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against the pure-numpy fallback.

Times farthest point sampling, ball query, k-NN, row scatter-add, and the
FNV-1a checksum under both backends on the same inputs, checks the
outputs match exactly, and prints the speedups. The numba numbers exclude
the first (compilation) call.

    python bench/bench_kernels.py --n 20000 --queries 2000 --repeat 3
"""

import argparse
import time

import numpy as np

from pointforge import backend, kernels


def timed(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20_000, help="source cloud size")
    parser.add_argument("--queries", type=int, default=2_000)
    parser.add_argument("--stride", type=int, default=8)
    parser.add_argument("--k", type=int, default=16)
    parser.add_argument("--radius", type=float, default=0.05)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not backend.numba_available():
        print("numba is not installed; nothing to compare (PF_BACKEND=numpy only).")
        return 1

    rng = np.random.default_rng(args.seed)
    coords = rng.uniform(-0.5, 0.5, (args.n, 3))
    queries = rng.uniform(-0.5, 0.5, (args.queries, 3))
    centroid_idx = rng.choice(args.n, size=args.queries, replace=False)
    scatter_rows = rng.integers(0, args.n, size=args.queries * args.k)
    scatter_vals = rng.standard_normal((args.queries * args.k, 32))
    payload = rng.integers(0, 256, size=1_000_000, dtype=np.uint8).tobytes()

    cases = {
        "fps": lambda: kernels.farthest_point_sampling(coords, args.stride),
        "ball_query": lambda: kernels.ball_query(
            coords, centroid_idx, args.radius, args.k
        ).neighbor_indices,
        "knn": lambda: kernels.knn(coords, queries, args.k)[0],
        "scatter_add": lambda: kernels.scatter_add_rows(
            np.zeros((args.n, 32)), scatter_rows, scatter_vals
        ),
        "fnv1a64": lambda: kernels.fnv1a64(payload),
    }

    print(f"n={args.n} queries={args.queries} k={args.k} stride={args.stride} "
          f"radius={args.radius} repeat={args.repeat}")
    print(f"{'kernel':<12} {'numpy':>10} {'numba':>10} {'speedup':>8}  match")
    for name, fn in cases.items():
        backend.use_backend("numpy")
        t_numpy, ref = timed(fn, args.repeat)
        backend.use_backend("numba")
        fn()  # compile outside the timed region
        t_numba, got = timed(fn, args.repeat)
        if isinstance(ref, np.ndarray):
            match = np.array_equal(ref, got)
        else:
            match = ref == got
        print(
            f"{name:<12} {t_numpy * 1e3:>8.1f}ms {t_numba * 1e3:>8.1f}ms "
            f"{t_numpy / t_numba:>7.1f}x  {match}"
        )
        if not match:
            raise SystemExit(f"backend mismatch in {name}")
    backend.use_backend("auto")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
