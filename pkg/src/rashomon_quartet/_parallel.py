"""Order-preserving thread pool used by the forest, bootstrap and sweep loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "RQ_THREADS"


def resolve_threads(n_threads: int | None = None) -> int:
    """Explicit argument, else $RQ_THREADS, else 1."""
    if n_threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        n_threads = int(raw) if raw else 1
    if n_threads < 1:
        raise ValueError(f"thread count must be >= 1, got {n_threads}")
    return n_threads


def pmap(fn: Callable[[T], R], items: Iterable[T], n_threads: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, possibly computed concurrently; result order is input order."""
    items = list(items)
    n = resolve_threads(n_threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
