"""Fixed-size chunking of independent work items over an optional process pool.

Chunks are the unit of computation in both serial and parallel mode, so the
numbers produced never depend on the worker count.
"""

from concurrent.futures import ProcessPoolExecutor

import numpy as np


def chunk_bounds(n: int, chunk_size: int) -> list[tuple[int, int]]:
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]


def run_chunked(fn, n: int, chunk_size: int, workers: int = 1) -> np.ndarray:
    """Concatenate ``fn(start, stop)`` over consecutive chunks of ``range(n)``."""
    bounds = chunk_bounds(n, chunk_size)
    if workers <= 1 or len(bounds) <= 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)
