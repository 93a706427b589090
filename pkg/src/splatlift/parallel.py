"""Deterministic chunked thread parallelism.

Work is split into contiguous index ranges and results are returned in range
order, so output never depends on the worker count or scheduling.
"""

import os
from concurrent.futures import ThreadPoolExecutor

WORKERS_ENV = "SPLATLIFT_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def chunk_ranges(n: int, workers: int, min_chunk: int = 1):
    parts = max(1, min(workers, n // max(min_chunk, 1) or 1))
    bounds = [n * i // parts for i in range(parts + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(parts)]


def map_ranges(fn, n: int, workers: int = 1, min_chunk: int = 1):
    """``[fn(lo, hi) for each range]`` in range order."""
    ranges = chunk_ranges(n, workers, min_chunk)
    if len(ranges) == 1:
        return [fn(*ranges[0])]
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))
