"""Module-level cache of solved equilibria keyed by the model part of a run config.

`report` runs several checks against the same equilibrium; the key covers
everything that determines it (regime, horizon, grid and types) and nothing
else, so simulation settings never force a re-solve.
"""
from __future__ import annotations

import threading
from typing import Any, Callable, Dict

from cachetools import LRUCache


def _freeze(v: Any) -> Any:
    """Recursively convert dict/list into hashable tuples."""
    if isinstance(v, dict):
        return tuple(sorted((k, _freeze(val)) for k, val in v.items()))
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


class SolveCache:
    def __init__(self, maxsize: int = 16) -> None:
        self._cache: LRUCache = LRUCache(maxsize=maxsize)
        self._lock = threading.Lock()

    def get_or_create(self, kind: str, params: Dict[str, Any], factory: Callable[[], Any]) -> Any:
        """Return the cached object for (kind, params), building it on a miss."""
        key = (kind, _freeze(params or {}))
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = factory()
        with self._lock:
            self._cache[key] = value
        return value

    def __len__(self) -> int:
        return len(self._cache)

    def clear(self) -> None:
        with self._lock:
            self._cache.clear()


solve_cache = SolveCache()
