#!/usr/bin/env python3
"""
Batch Runner - Order-preserving parallel execution and table caching
Shared by pair scoring, parameter sweeps and cross-validation folds
"""

import time
import logging
import threading
from functools import wraps
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar
from concurrent.futures import ThreadPoolExecutor

from cachetools import LRUCache, cached

from config import config
from errors import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


class BatchRunner:
    """Run independent work items on a thread pool, results in input order"""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = config.THREADS if max_workers is None else int(max_workers)
        if self.max_workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {max_workers}")
        self.metrics = {
            'batches': 0,
            'total_tasks': 0,
            'total_seconds': 0.0
        }
        self._lock = threading.Lock()

    def map(self, func: Callable[[T], R], items: Iterable[T], label: str = 'batch') -> List[R]:
        """
        Apply func to every item

        Args:
            func: pure function of one item
            items: work items
            label: name used in log lines

        Returns:
            List of results aligned with items
        """
        work = list(items)
        start_time = time.time()

        if self.max_workers == 1 or len(work) <= 1:
            results = [func(item) for item in work]
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                results = list(executor.map(func, work))

        elapsed = time.time() - start_time
        with self._lock:
            self.metrics['batches'] += 1
            self.metrics['total_tasks'] += len(work)
            self.metrics['total_seconds'] += elapsed

        logger.debug("%s: %d tasks in %.3fs on %d workers", label, len(work), elapsed, self.max_workers)
        return results

    def get_metrics(self) -> Dict[str, Any]:
        with self._lock:
            return dict(self.metrics)


def cached_table(maxsize: int = 64):
    """Decorator caching a pure table builder keyed on its arguments"""
    def decorator(func: Callable):
        cache = LRUCache(maxsize=maxsize)
        lock = threading.RLock()
        wrapped = cached(cache, lock=lock)(func)

        @wraps(func)
        def wrapper(*args, **kwargs):
            return wrapped(*args, **kwargs)

        wrapper.cache = cache
        return wrapper
    return decorator
