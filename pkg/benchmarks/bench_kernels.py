"""Compare the compiled and pure-numpy kernels on the hot loops.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3]

Prints one line per kernel with the best-of-N wall time for each backend,
the speedup and the max abs difference between the two outputs after 10
steps. Longer runs separate at the chaotic rate from libm rounding alone.
"""

import argparse
import time

import numpy as np

from srbkit import _pykernels as py

try:
    from srbkit import _ckernels as cy
except ImportError:  # the fallback still runs; only the comparison is skipped
    cy = None


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.random(20000), rng.uniform(-0.5, 0.5, (20000, 2))])
    K = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    ph = np.array([0.3, 0.7, 1.1])
    st0 = rng.integers(1, 2 ** 63, size=20000, dtype=np.uint64)
    a0 = 0.3 * rng.standard_normal(16) / np.arange(1, 17)

    def skew_adv(mod, n=200):
        Y = np.ascontiguousarray(X.copy())
        mod.skew_advance(Y, n, 0.25, 0.5, False, st0.copy())
        return Y

    def skew_birk(mod, n=200):
        Y = np.ascontiguousarray(X.copy())
        return mod.skew_birkhoff(Y, n, 0.25, 0.0, True, st0.copy(), K, ph)

    def cat_birk(mod, n=200):
        Y = np.ascontiguousarray(X.copy())
        return mod.cat_birkhoff(Y, n, 0.2, K, ph)

    def galerkin(mod, n=None):
        return mod.galerkin_flow(a0, 0.5, 1e-3, 12.0, True)[1]

    return [("skew_advance 2e4x200", skew_adv), ("skew_birkhoff 2e4x200", skew_birk),
            ("cat_birkhoff 2e4x200", cat_birk), ("galerkin_flow+jac T=0.5", galerkin)]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':28s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} {'diff@10':>10s}")
    for name, fn in cases():
        tp, _ = _best(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:28s} {tp:10.4f} {'n/a':>10s}")
            continue
        tc, _ = _best(lambda: fn(cy), args.repeat)
        diff = float(np.max(np.abs(np.asarray(fn(py, 10)) - np.asarray(fn(cy, 10)))))
        print(f"{name:28s} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
