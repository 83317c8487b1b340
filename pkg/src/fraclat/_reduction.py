"""Deterministic blocked reductions.

All O(N^2) pair sums go through `blocked_row_sum` / `blocked_total`: the row
index space is split into fixed-size blocks, per-block partials are computed
with single numpy calls and combined in block order.  The result is therefore
bit-identical regardless of how many worker threads are used.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_BLOCK = 64
_threads = None


def get_threads() -> int:
    global _threads
    if _threads is None:
        env = os.environ.get("FRACLAT_THREADS", "")
        _threads = int(env) if env.strip() else 1
    return _threads


def set_threads(n: int) -> None:
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    global _threads
    _threads = n


def _block_ranges(n: int):
    return [(i, min(i + _BLOCK, n)) for i in range(0, n, _BLOCK)]


def _map_blocks(fn, n: int):
    """Apply fn(lo, hi) to each row block; return partials in block order."""
    ranges = _block_ranges(n)
    nthreads = get_threads()
    if nthreads == 1 or len(ranges) == 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        return list(pool.map(lambda r: fn(r[0], r[1]), ranges))


def blocked_total(matrix: np.ndarray) -> float:
    """Sum all entries of a 2-D array, fixed block order."""
    partials = _map_blocks(lambda lo, hi: float(matrix[lo:hi].sum()), matrix.shape[0])
    total = 0.0
    for p in partials:
        total += p
    return total


def blocked_row_sum(matrix: np.ndarray) -> np.ndarray:
    """Row sums of a 2-D array, computed block by block."""
    out = np.empty(matrix.shape[0])
    for (lo, hi), part in zip(
        _block_ranges(matrix.shape[0]),
        _map_blocks(lambda lo, hi: matrix[lo:hi].sum(axis=1), matrix.shape[0]),
    ):
        out[lo:hi] = part
    return out
