#!/usr/bin/env python3
"""Time the numpy and numba kernel backends against each other.

Covers the decomposition weight cube (the only quadratic-cost kernel)
and the fused elementwise passes that dominate training steps.  Prints
one row per (kernel, size): best-of-N wall time for both backends, the
speedup, and the largest absolute disagreement on identical inputs.

Run from a checkout:  python3 benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

from ranlab import kernels
from ranlab.rng import Rng


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_weight_cube(backends, repeats, sizes):
    rng = Rng(1)
    for steps, width in sizes:
        i_gates = rng.uniform((steps, width))
        f_gates = rng.uniform((steps, width))
        outs, times = [], []
        for backend in backends:
            backend.weight_cube(i_gates, f_gates)  # warm the jit cache
            times.append(best_of(lambda b=backend: b.weight_cube(i_gates, f_gates), repeats))
            outs.append(backend.weight_cube(i_gates, f_gates))
        yield f"weight_cube T={steps} w={width}", times, float(np.abs(outs[0] - outs[1]).max())


def bench_elementwise(backends, repeats, rows):
    rng = Rng(2)
    for n in rows:
        x = rng.uniform_signed(4.0, (n, 64))
        for name in ("sigmoid_fwd", "tanh_fwd"):
            outs, times = [], []
            for backend in backends:
                fn = getattr(backend, name)
                fn(x)
                times.append(best_of(lambda f=fn: f(x), repeats))
                outs.append(fn(x))
            yield f"{name} {n}x64", times, float(np.abs(outs[0] - outs[1]).max())


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions, best is kept (default: 5)")
    args = parser.parse_args()

    if kernels.numba_backend is None:
        print("numba backend unavailable; nothing to compare")
        return 1
    backends = (kernels.numpy_backend, kernels.numba_backend)

    cube_sizes = [(64, 64), (128, 128), (256, 256), (512, 256)]
    elem_rows = [1_000, 100_000]
    header = f"{'kernel':28} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max |diff|':>11}"
    print(header)
    print("-" * len(header))
    rows = list(bench_weight_cube(backends, args.repeats, cube_sizes))
    rows += list(bench_elementwise(backends, args.repeats, elem_rows))
    for label, (t_np, t_nb), diff in rows:
        print(f"{label:28} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
              f"{t_np / t_nb:7.2f}x {diff:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
