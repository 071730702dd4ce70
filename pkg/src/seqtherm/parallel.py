"""Deterministic worker-pool helpers.

The worker count comes from SEQTHERM_THREADS when set, else the CPU count.
Results always reduce in submission order, so outputs are independent of the
degree of parallelism.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def worker_count(override: int | None = None) -> int:
    if override is not None:
        return max(1, int(override))
    env = os.environ.get("SEQTHERM_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def ordered_map(fn: Callable[[T], R], items: Sequence[T],
                n_workers: int | None = None) -> list[R]:
    """Map preserving input order; runs serially for a single worker."""
    workers = worker_count(n_workers)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
