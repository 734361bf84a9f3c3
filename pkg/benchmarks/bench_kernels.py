"""Benchmark the compiled split-scan kernel against the NumPy fallback.

Two views: the raw scan over pre-sorted gradient/hessian arrays (the hot
inner loop), and a full boosted-tree fit on a synthetic learnable dataset.

Run:  python benchmarks/bench_kernels.py [--rounds 100] [--fit-n 2000]
"""

import argparse
import time

import numpy as np

from ventureval import _kernels, gbdt
from ventureval._kernels import fallback


def make_scan_case(rng, n):
    values = np.sort(rng.choice(rng.normal(size=max(2, n // 3)), size=n))
    p = rng.uniform(0.02, 0.98, size=n)
    y = (rng.random(n) < 0.5).astype(float)
    return values, p - y, p * (1 - p)


def time_scan(fn, case, repeats):
    values, grad, hess = case
    fn(values, grad, hess, 1.0, 0.0, 1.0)  # warmup
    started = time.perf_counter()
    for _ in range(repeats):
        fn(values, grad, hess, 1.0, 0.0, 1.0)
    return (time.perf_counter() - started) / repeats


def make_fit_case(rng, n):
    X = rng.normal(size=(n, 6))
    y = (X[:, 1] + 0.7 * X[:, 3] - 0.4 * X[:, 5] > 0.2).astype(float)
    return X, y


def time_fit(scan_fn, X, y, config):
    original = _kernels.scan_split
    gbdt._kernels.scan_split = scan_fn
    try:
        started = time.perf_counter()
        gbdt.fit(X, y, config)
        return time.perf_counter() - started
    finally:
        gbdt._kernels.scan_split = original


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=100, help="boosting rounds for the fit benchmark")
    parser.add_argument("--fit-n", type=int, default=2000, help="training rows for the fit benchmark")
    args = parser.parse_args()

    if _kernels.BACKEND != "compiled":
        print("compiled kernel not built; benchmarking the fallback against itself")
    compiled_fn = _kernels.scan_split
    rng = np.random.default_rng(42)

    print(f"{'scan n':>10} {'compiled us':>12} {'fallback us':>12} {'speedup':>8}")
    for n in (100, 1_000, 10_000, 100_000):
        case = make_scan_case(rng, n)
        repeats = max(3, 200_000 // n)
        t_compiled = time_scan(compiled_fn, case, repeats)
        t_fallback = time_scan(fallback.scan_split, case, repeats)
        print(
            f"{n:>10} {t_compiled * 1e6:>12.1f} {t_fallback * 1e6:>12.1f} "
            f"{t_fallback / t_compiled:>7.1f}x"
        )

    X, y = make_fit_case(rng, args.fit_n)
    config = gbdt.GbdtConfig(n_rounds=args.rounds)
    t_compiled = time_fit(compiled_fn, X, y, config)
    t_fallback = time_fit(fallback.scan_split, X, y, config)
    print(
        f"\nfull fit (n={args.fit_n}, d=6, rounds={args.rounds}, depth={config.max_depth}): "
        f"compiled {t_compiled:.2f}s, fallback {t_fallback:.2f}s, "
        f"speedup {t_fallback / t_compiled:.1f}x"
    )


if __name__ == "__main__":
    main()
