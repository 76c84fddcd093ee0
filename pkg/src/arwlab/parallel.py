"""Trial scheduling.

Kernels take ``(..., master, start, count, ...)`` and return one row per
trial, with trial i seeded from (master, i) alone. Splitting a run into
contiguous chunks and concatenating in chunk order therefore gives the
same array for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def chunk_ranges(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    bounds = np.linspace(0, total, parts + 1).astype(int)
    return [(int(a), int(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _call(fn, head, start, count, kwargs):
    return fn(*head, start, count, **kwargs)


def run_chunks(fn, total: int, workers: int, *head, **kwargs) -> np.ndarray:
    """Evaluate ``fn(*head, start, count, **kwargs)`` over [0, total) and stack the rows."""
    if total < 1:
        raise ValueError("need at least one trial")
    workers = max(1, int(workers or 1))
    if workers == 1:
        return fn(*head, 0, total, **kwargs)
    ranges = chunk_ranges(total, workers * 4)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_call, fn, head, s, c, kwargs) for s, c in ranges]
        return np.concatenate([f.result() for f in futures], axis=0)
