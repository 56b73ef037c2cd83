"""SolveCache behaviour."""
from __future__ import annotations

from ezmfg.common.solve_cache import SolveCache


def test_builds_once_per_key():
    cache = SolveCache()
    calls = []

    def build():
        calls.append(1)
        return object()

    first = cache.get_or_create("mfg", {"T": 1.0, "grid": {"n_cells": 10}}, build)
    again = cache.get_or_create("mfg", {"grid": {"n_cells": 10}, "T": 1.0}, build)
    assert first is again
    assert len(calls) == 1


def test_kind_and_params_separate_entries():
    cache = SolveCache()
    a = cache.get_or_create("mfg", {"T": 1.0}, object)
    b = cache.get_or_create("nplayer", {"T": 1.0}, object)
    c = cache.get_or_create("mfg", {"T": 2.0}, object)
    assert len({id(a), id(b), id(c)}) == 3
    assert len(cache) == 3


def test_nested_lists_are_hashable():
    cache = SolveCache()
    params = {"population": [{"market": {"r": [0.01, 0.02]}}]}
    assert cache.get_or_create("mfg", params, lambda: 1) == 1


def test_lru_eviction_and_clear():
    cache = SolveCache(maxsize=2)
    for i in range(3):
        cache.get_or_create("mfg", {"i": i}, lambda: i)
    assert len(cache) == 2
    cache.clear()
    assert len(cache) == 0
