"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker pool size, capped by the DRIFTALIGN_THREADS env var."""
    raw = os.environ.get("DRIFTALIGN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Order-preserving map, threaded when DRIFTALIGN_THREADS > 1.

    Results always come back in input order so downstream reductions
    (argmax tie-breaking in particular) stay deterministic.
    """
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
