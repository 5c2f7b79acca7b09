"""Time the numba and numpy backends of the hot kernels side by side.

Usage: python3 benchmarks/bench_kernels.py [--sizes 500 1000 2000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from rieszbal import _accel


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, rng):
    X = rng.standard_normal((n, 3))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    diag = np.full(n, 2.0 * np.sqrt(n))
    P = rng.uniform(-2, 2, (200, 3))
    w = rng.uniform(0, 1, n)
    K = _accel.kernel_matrix_np(X, diag, -1.0)
    b = np.ones(n)

    def sweep(impl):
        def run():
            ww, r = np.zeros(n), np.zeros(n)
            impl(K, b, ww, r)
        return run

    return {
        "kernel_matrix": (lambda: _accel.kernel_matrix_np(X, diag, -1.0),
                          lambda: _accel.kernel_matrix_nb(X, diag, -1.0)),
        "potential(200 probes)": (lambda: _accel.potential_np(P, X, w, diag, -1.0),
                                  lambda: _accel.potential_nb(P, X, w, diag, -1.0)),
        "matvec": (lambda: _accel.matvec_np(K, w), lambda: _accel.matvec_nb(K, w)),
        "cd_sweep": (sweep(_accel.cd_sweep_np), sweep(_accel.cd_sweep_nb)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba backend unavailable (RIESZBAL_DISABLE_NUMBA set or numba missing)")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'N':>6}{'numpy [ms]':>13}{'numba [ms]':>13}{'speedup':>9}")
    for n in args.sizes:
        for name, (f_np, f_nb) in cases(n, rng).items():
            f_nb()  # compile outside the timing
            t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
            print(f"{name:<24}{n:>6}{1e3 * t_np:>13.2f}{1e3 * t_nb:>13.2f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
