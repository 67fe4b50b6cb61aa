"""Time the compiled and pure-numpy kernels on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--n 1024] [--bound 32] [--repeat 3]
"""
import argparse
import time

import numpy as np

from sparsedom._accel import HAVE_NUMBA
from sparsedom.operators import ModulatedMaximalSup, grand_sharp_field, make_profile
from sparsedom.signal import Signal


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--bound", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    prof = make_profile(args.n, frequency_bound=args.bound)
    f = Signal.trig(args.n, 32, [0, 0])
    backends = [False] + ([True] if HAVE_NUMBA else [])
    results = {}
    for use in backends:
        op = ModulatedMaximalSup(prof, use_numba=use)
        if use:  # compile outside the timed region
            op.field(f)
        name = "numba" if use else "numpy"
        t_field, v_field = best_of(lambda: op.field(f), args.repeat)
        t_sharp, v_sharp = best_of(lambda: grand_sharp_field(f, op), args.repeat)
        results[name] = (v_field, v_sharp)
        print(f"{name:6s} modulated_maximal_sup {t_field:8.3f}s   grand_sharp {t_sharp:8.3f}s")
    if len(results) == 2:
        a, b = results["numba"], results["numpy"]
        diff = max(np.max(np.abs(a[0] - b[0])), np.max(np.abs(a[1] - b[1])))
        print(f"max abs difference between backends: {diff:.3g}")


if __name__ == "__main__":
    main()
