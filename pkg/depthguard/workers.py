"""Ordered parallel map over samples."""

import concurrent.futures
import os
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

from depthguard.constants import THREADS_ENV
from depthguard.exceptions import ConfigError

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Worker count from the environment, defaulting to the number of logical processors."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if count < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return count


def map_ordered(
    fn: Callable[[T], R], items: Iterable[T], desc: Optional[str] = None, threads: Optional[int] = None
) -> List[R]:
    """Apply ``fn`` to every item and return the results in input order.

    Results never depend on the worker count: each call is independent and the reduction order is
    the input order.
    """
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) < 2:
        return [fn(item) for item in tqdm(items, desc=desc, disable=None, leave=False)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=None, leave=False))
