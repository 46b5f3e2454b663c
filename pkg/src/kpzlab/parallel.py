"""Deterministic replica-parallel map.

Tasks are pure functions of their arguments; results are returned in the
order of the input items regardless of completion order or worker count,
which is what makes every downstream reduction worker-count-invariant.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "KPZLAB_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, workers: int = None) -> list:
    """map(fn, items) preserving item order; workers > 1 uses processes."""
    items = list(items)
    if workers is None:
        workers = default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
