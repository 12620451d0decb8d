"""Order-preserving map over independent experiment cells."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    env = os.environ.get("SGDCONV_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def cell_map(fn, items, workers: int = 1) -> list:
    """``[fn(item) for item in items]``, optionally across processes.

    Each cell carries its own seed, so results do not depend on ``workers``.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
