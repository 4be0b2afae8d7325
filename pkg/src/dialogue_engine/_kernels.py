"""Hot loop for bulk nuance-chain simulation.

The sequential chain walk is the only compute-bound spot in the engine
(ergodic checks and synthetic usage logs run it for 1e5+ steps), so it is
compiled with numba when available. Set DIALOGUE_ENGINE_DISABLE_NUMBA=1 to
force the pure-Python/numpy path; `benchmarks/bench_chain.py` compares the
two. Both paths consume the same pre-drawn uniforms, so they produce
identical trajectories.
"""

from __future__ import annotations

import os

import numpy as np

DISABLE_ENV = "DIALOGUE_ENGINE_DISABLE_NUMBA"


def _walk_chain_py(cum_columns: np.ndarray, start: int, uniforms: np.ndarray) -> np.ndarray:
    """Walk the chain for len(uniforms) steps.

    cum_columns[i, j] is the cumulative probability of landing in state <= i
    when leaving state j. Ties at cumulative boundaries resolve to the lower
    index (first i with cum >= u).
    """
    n = cum_columns.shape[0]
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    j = start
    for t in range(uniforms.shape[0]):
        u = uniforms[t]
        i = 0
        while i < n - 1 and cum_columns[i, j] < u:
            i += 1
        out[t] = i
        j = i
    return out


try:
    from numba import njit

    _walk_chain_njit = njit(cache=True)(_walk_chain_py)
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _walk_chain_njit = None
    _HAVE_NUMBA = False


def numba_active() -> bool:
    if not _HAVE_NUMBA:
        return False
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in ("1", "true", "yes")


def walk_chain(cum_columns: np.ndarray, start: int, uniforms: np.ndarray) -> np.ndarray:
    if numba_active():
        return _walk_chain_njit(cum_columns, start, uniforms)
    return _walk_chain_py(cum_columns, start, uniforms)
