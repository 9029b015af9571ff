"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py
"""

import time

import numpy as np
from numpy.random import Philox

from mfsur import _backend
from mfsur.oscillator import propagator_matrix


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(bvn_n=1_000_000, traj_streams=64, traj_steps=3000, repeats=3):
    """Returns rows (kernel, numpy seconds, compiled seconds, speedup)."""
    rng = np.random.default_rng(0)
    h = rng.uniform(-6, 6, bvn_n)
    k = rng.uniform(-6, 6, bvn_n)
    r = rng.uniform(-0.999, 0.999, bvn_n)
    em = propagator_matrix(3.0, 0.1, 0.01)
    targs = (em[0, 0], em[0, 1], em[1, 0], em[1, 1], 0.25, traj_steps)

    rows = []
    for name, build in (
        ("bvn_cdf", lambda mod: (lambda: mod.bvn_cdf(h, k, r))),
        ("trajectory", lambda mod: (lambda: mod.traj_max_abs(
            [Philox(key=i) for i in range(traj_streams)], *targs))),
    ):
        times = {}
        for backend in ("numpy", "compiled"):
            try:
                mod = _backend.get_backend(backend)
            except ImportError:
                times[backend] = np.nan
                continue
            times[backend] = _time(build(mod), repeats)
        speedup = times["numpy"] / times["compiled"]
        rows.append((name, times["numpy"], times["compiled"], speedup))
    return rows


def main():
    rows = run()
    print(f"{'kernel':<12} {'numpy [s]':>12} {'compiled [s]':>13} {'speedup':>9}")
    for name, t_np, t_c, speedup in rows:
        print(f"{name:<12} {t_np:>12.4f} {t_c:>13.4f} {speedup:>8.1f}x")


if __name__ == "__main__":
    main()
