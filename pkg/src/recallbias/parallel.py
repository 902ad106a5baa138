"""Order-preserving map over worker processes."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, threads: int = 1):
    """``list(map(fn, items))``, spread over up to ``threads`` processes.

    Results come back in input order, so reductions are independent of
    scheduling.  ``threads <= 1`` runs inline.
    """
    items = list(items)
    threads = min(int(threads or 1), os.cpu_count() or 1, max(1, len(items)))
    if threads <= 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
