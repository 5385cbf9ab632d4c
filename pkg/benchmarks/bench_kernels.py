"""Time the Gaussian-moment RK4 kernel: compiled extension versus numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--durations 3,10] [--repeat 3]
"""
import argparse
import time

import numpy as np

from invshuttle import _fallback
from invshuttle.protocols import SeparationSpec, build_separation

try:
    from invshuttle import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--durations", default="3,10")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print(f"{'T':>5} {'steps':>7} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8} {'max |diff|':>11}")
    for T in (float(x) for x in args.durations.split(",")):
        built = build_separation(SeparationSpec(duration=T))
        ham, s0 = built.synthesis.hamiltonian, built.initial_state
        h = built.grid[1] - built.grid[0]
        call = (ham.omega, ham.drive, s0.mean, s0.cov, h)
        t_py, (z_py, c_py) = best_of(lambda: _fallback.gaussian_rk4(*call), args.repeat)
        if _kernels is None:
            print(f"{T:5g} {built.grid.size - 1:7d} {t_py:10.4f} {'n/a':>11} {'n/a':>8} {'n/a':>11}")
            continue
        t_cy, (z_cy, c_cy) = best_of(lambda: _kernels.gaussian_rk4(*call), args.repeat)
        diff = max(np.max(np.abs(c_py - c_cy)), np.max(np.abs(z_py - z_cy)) / np.max(np.abs(z_py)))
        print(f"{T:5g} {built.grid.size - 1:7d} {t_py:10.4f} {t_cy:11.4f} {t_py / t_cy:8.1f} {diff:11.1e}")


if __name__ == "__main__":
    main()
