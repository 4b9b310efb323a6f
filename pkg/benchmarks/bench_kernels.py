"""Compare the numba and numpy backends of the replica kernels.

    python3 benchmarks/bench_kernels.py [--lanes N] [--repeat R]

Both backends consume the same counter-based streams, so besides timing each
kernel the script reports the largest difference between their path
summaries (round-off only: libm and LLVM may disagree in the last ulp).
"""
import argparse
import time

import numpy as np

from ldp_lab import kernels
from ldp_lab._jit import NUMBA_ENABLED


def cases(lanes):
    sids = np.arange(lanes, dtype=np.uint64)
    P = np.array([[0.3, 0.7], [0.6, 0.4]])
    yield "gaussian_walk (256 steps)", lambda b: kernels.gaussian_walk(
        11, sids, 256, 0.0625, backend=b)
    yield "markov_walk (n=40)", lambda b: kernels.markov_walk(
        12, sids, 40, 40, [0.5, 0.5], P, [0.0, 1.0], backend=b)
    yield "poisson_walk (n=20)", lambda b: kernels.poisson_walk(
        13, sids, 20, 1.0, [0.5, 0.5], [1.0, 2.0], backend=b)
    yield "uet_gaussian (n=8, 256 steps)", lambda b: kernels.uet_gaussian(
        14, sids, 8, 1.0, 256, [0.5, 0.5], [1.0, 1.0], [1.0, 1.0], 0, 1, backend=b)


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lanes", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not NUMBA_ENABLED:
        print("numba disabled; timing the numpy backend only")
    print(f"{'kernel':32s} {'numpy s':>9s} {'numba s':>9s} {'speedup':>8s}  max |diff|")
    for name, run in cases(args.lanes):
        t_np, out_np = best_of(lambda: run("numpy"), args.repeat)
        if NUMBA_ENABLED:
            run("numba")  # compile outside the timed region
            t_nb, out_nb = best_of(lambda: run("numba"), args.repeat)
            diff = max(float(np.max(np.abs(getattr(out_np, f) - getattr(out_nb, f))))
                       for f in ("terminal", "sup_abs", "maximum", "minimum"))
            print(f"{name:32s} {t_np:9.3f} {t_nb:9.3f} {t_np / t_nb:7.1f}x  {diff:.1e}")
        else:
            print(f"{name:32s} {t_np:9.3f} {'-':>9s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
