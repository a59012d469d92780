#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

The two hot paths are brute-force k-nearest-neighbor search (graph
construction) and the clamped power iteration over the CSR transition
matrix. Run:

    python benchmarks/bench_kernels.py --n 3000 --dim 256

Set PULSEPROP_PURE_PYTHON=1 elsewhere to force the fallback at import
time; here both implementations are imported directly so one process
times both.
"""

import argparse
import time

import numpy as np
import scipy.sparse as sp

from pulseprop._kernels import _numpy_impl

try:
    from pulseprop._kernels import _speedups
except ImportError:
    _speedups = None


def time_call(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        started = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - started)
    return best, result


def bench_topk(impl, x, k):
    return time_call(impl.topk_neighbors, x, x, k, True)


def bench_propagation(impl, transition, y0, labeled, iters):
    return time_call(
        impl.propagate_csr,
        transition.indptr,
        transition.indices,
        transition.data,
        y0,
        y0.copy(),
        labeled,
        0.0,  # unreachable tolerance: run exactly `iters` iterations
        iters,
    )


def build_knn_transition(x, k):
    nn = _numpy_impl.topk_neighbors(x, x, k, exclude_self=True)
    n = x.shape[0]
    rows = np.repeat(np.arange(n), k)
    adjacency = sp.coo_matrix((np.ones(rows.size), (rows, nn.ravel())), shape=(n, n)).tocsr()
    adjacency.data[:] = 1.0
    adjacency = adjacency.maximum(adjacency.T)
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    return (sp.diags(1.0 / degree) @ adjacency).tocsr()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=3000, help="number of feature rows")
    parser.add_argument("--dim", type=int, default=256, help="feature dimensionality")
    parser.add_argument("--k", type=int, default=7, help="neighbors per node")
    parser.add_argument("--iters", type=int, default=200, help="propagation iterations")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    x = rng.normal(size=(args.n, args.dim))
    transition = build_knn_transition(x, args.k)
    labeled = np.zeros(args.n, dtype=np.uint8)
    labeled[rng.choice(args.n, size=max(2, args.n // 10), replace=False)] = 1
    y0 = np.full((args.n, 2), 0.5)
    y0[labeled.astype(bool)] = np.eye(2)[rng.integers(0, 2, int(labeled.sum()))]

    impls = [("numpy", _numpy_impl)]
    if _speedups is not None:
        impls.append(("compiled", _speedups))
    else:
        print("compiled kernels unavailable; timing the fallback only")

    print(f"n={args.n} dim={args.dim} k={args.k} iters={args.iters}")
    print(f"{'kernel':<22}{'backend':<12}{'best (s)':>10}")
    baselines = {}
    for label, fn, fn_args in (
        ("topk_neighbors", bench_topk, (x, args.k)),
        ("propagate_csr", bench_propagation, (transition, y0, labeled, args.iters)),
    ):
        results = {}
        for name, impl in impls:
            elapsed, result = fn(impl, *fn_args)
            results[name] = result[0] if isinstance(result, tuple) else result
            suffix = ""
            if name == "numpy":
                baselines[label] = elapsed
            else:
                suffix = f"  ({baselines[label] / elapsed:.2f}x vs numpy)"
            print(f"{label:<22}{name:<12}{elapsed:>10.4f}{suffix}")
        if len(results) == 2:
            same = np.array_equal(results["numpy"], results["compiled"])
            print(f"{'':<22}backends agree: {same}")


if __name__ == "__main__":
    main()
