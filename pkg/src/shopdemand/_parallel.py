from __future__ import annotations

from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def pmap(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> list[R]:
    """Ordered map; ``jobs > 1`` fans out to worker processes.

    Results come back in input order, so callers see the same output for
    any worker count.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=min(jobs, len(items)))(delayed(fn)(it) for it in items)
