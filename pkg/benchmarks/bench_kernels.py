"""Compare the numba and pure-numpy integration backends.

    python3 benchmarks/bench_kernels.py [--res 41] [--repeat 3]

Both backends run the same LD sweeps; the script reports wall time per
sweep and the largest relative disagreement between them.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ldscope import EscapeRegion, GridSpec2D, LDConfig, SystemSpec, compute_ld_field
from ldscope._accel import HAVE_NUMBA

CASES = [
    ("linear_saddle", {}, ((-1, 1), (-1, 1)), LDConfig(0.5, 8, 8)),
    ("hopf", {"beta": 0.5}, ((-1.5, 1.5), (-1.5, 1.5)),
     LDConfig(0.5, 8, 8, EscapeRegion.circle(4.0))),
    ("duffing", {"gamma": 0.5}, ((-2, 2), (-1.5, 1.5)), LDConfig(0.5, 10, 10)),
]


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--res", type=int, default=41)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'system':16s} {'backend':8s} {'nodes':>7s} {'seconds':>9s} {'us/node':>9s}")
    for sid, params, ranges, ldcfg in CASES:
        spec = SystemSpec(sid, params)
        grid = GridSpec2D(ranges=ranges, resolution=(args.res, args.res))
        results = {}
        for be in backends:
            # warm-up compiles the numba kernels outside the timed region
            compute_ld_field(spec, GridSpec2D(ranges=ranges, resolution=(2, 2)), ldcfg, backend=be)
            dt, fld = _time(lambda: compute_ld_field(spec, grid, ldcfg, backend=be), args.repeat)
            results[be] = fld
            n = args.res * args.res
            print(f"{sid:16s} {be:8s} {n:7d} {dt:9.3f} {1e6 * dt / n:9.1f}")
        if len(results) == 2:
            a, b = results["numba"].total, results["numpy"].total
            rel = np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))
            print(f"{'':16s} max relative difference numba vs numpy: {rel:.2e}")


if __name__ == "__main__":
    main()
