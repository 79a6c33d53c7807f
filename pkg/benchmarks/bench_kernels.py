"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 4096]

The numba path is compiled once before timing. Each row also reports the
largest difference between the two paths.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from scalcurv import kernels
from scalcurv._accel import NUMBA_ENABLED


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(size, rng):
    off = rng.uniform(-1.0, 1.0, size - 1)
    diag = 4.0 + rng.uniform(0.0, 1.0, size)
    rhs = rng.standard_normal(size)
    yield "tridiag_solve", kernels._tridiag_solve_nb, kernels._tridiag_solve_np, (off, diag, off.copy(), rhs)
    yield "tridiag_negcount", kernels._tridiag_negcount_nb, kernels._tridiag_negcount_np, (diag - 4.5, off, 0.0)
    yield "rk4_fowler", kernels._rk4_fowler_nb, kernels._rk4_fowler_np, (6.0, 4.0, -1.2, 0.1, 1e-3, 50 * size)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=4096)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba enabled: {NUMBA_ENABLED}")
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, fast, slow, a in cases(args.size, rng):
        fast(*a)  # compile
        tf, of = best_of(fast, a, args.repeat)
        ts, os_ = best_of(slow, a, args.repeat)
        diff = float(np.max(np.abs(np.subtract(of, os_, dtype=float))))
        print(f"{name:<18}{tf:>12.2e}{ts:>12.2e}{ts / tf:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
