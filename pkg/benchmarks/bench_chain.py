"""Benchmark the nuance chain walk: numba kernel vs pure-Python fallback.

Run:  python benchmarks/bench_chain.py [steps]
The same pre-drawn uniforms feed both paths, which must agree exactly;
timings show what DIALOGUE_ENGINE_DISABLE_NUMBA=1 costs.
"""

import sys
import time

import numpy as np

from dialogue_engine import _kernels
from dialogue_engine.config import load_config
from dialogue_engine.nuance import NuanceKind


def time_fn(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def main() -> int:
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000
    config = load_config()
    print(f"{steps:,} chain steps per nuance; numba available: {_kernels._HAVE_NUMBA}, "
          f"active: {_kernels.numba_active()}")
    header = f"{'nuance':12s} {'python [s]':>12s} {'numba [s]':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for kind in NuanceKind:
        matrix = config.nuances[kind].matrix_first
        uniforms = np.random.default_rng(2718).random(steps)
        t_py, out_py = time_fn(_kernels._walk_chain_py, matrix.cum_columns,
                               matrix.size - 1, uniforms)
        if _kernels._HAVE_NUMBA:
            _kernels._walk_chain_njit(matrix.cum_columns, matrix.size - 1, uniforms[:10])
            t_jit, out_jit = time_fn(_kernels._walk_chain_njit, matrix.cum_columns,
                                     matrix.size - 1, uniforms)
            assert np.array_equal(out_py, out_jit), "kernel paths disagree"
            print(f"{kind.value:12s} {t_py:12.4f} {t_jit:12.4f} {t_py / t_jit:8.1f}x")
        else:
            print(f"{kind.value:12s} {t_py:12.4f} {'n/a':>12s} {'n/a':>9s}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
