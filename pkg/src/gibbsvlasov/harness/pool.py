"""Worker pool with a fixed reduction order.

Work items are independent pure calls; results come back in submission
order whatever the worker count, so reductions never depend on scheduling.
"""
from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor


def run_items(fn, items, workers: int = 1) -> list:
    """``[fn(*item) for item in items]``, optionally across processes."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(*item) for item in items]
    # spawn, not fork: the compiled sampler owns an OpenMP runtime
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx) as ex:
        return list(ex.map(fn, *zip(*items)))
