"""Shared pytest fixtures.

Layout:
- tests/unit/: deterministic checks and small Monte Carlo runs. Fast. CI-safe.
- tests/integration/: full-size (10^5 path) Monte Carlo acceptance runs.
  Run only with `pytest -m integration` (opt-in).

The "worked example" used throughout is the single type
gamma=2, psi=2, delta=0.1, alpha=1, theta=0.5 in the market
r=0.02, h=0.05, sigma=0.2, sigma0=0.1 over T=1.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pytest

from ezmfg.model import AgentType, MarketCoefficients, Population, PreferenceParams


@pytest.fixture
def make_agent():
    """Factory for agent types with constant market coefficients."""
    def _make(
        n_cells: int = 200,
        delta: float = 0.1,
        gamma: float = 2.0,
        psi: float = 2.0,
        theta: float = 0.5,
        alpha: float = 1.0,
        r: float = 0.02,
        h: float = 0.05,
        sigma: float = 0.2,
        sigma0: float = 0.1,
        x0: float = 1.0,
    ) -> AgentType:
        return AgentType(
            prefs=PreferenceParams(delta=delta, gamma=gamma, psi=psi, theta=theta, alpha=alpha),
            market=MarketCoefficients.constant(n_cells, r=r, h=h, sigma=sigma, sigma0=sigma0),
            x0=x0,
        )
    return _make


@pytest.fixture
def make_population(make_agent):
    """Factory for populations on a uniform grid over [0, T]."""
    def _make(
        agents: Optional[Sequence[AgentType]] = None,
        weights: Optional[Sequence[float]] = None,
        n_cells: int = 200,
        T: float = 1.0,
        **agent_kwargs,
    ) -> Population:
        if agents is None:
            agents = [make_agent(n_cells=n_cells, **agent_kwargs)]
        return Population.from_types(list(agents), np.linspace(0.0, T, n_cells + 1), weights)
    return _make


@pytest.fixture
def worked_population(make_population) -> Population:
    return make_population(n_cells=1000)


@pytest.fixture
def two_type_population(make_agent, make_population) -> Population:
    """Heterogeneous population: a cautious and a bolder type."""
    n = 200
    a = make_agent(n_cells=n)
    b = make_agent(n_cells=n, gamma=3.0, psi=1.5, theta=0.3, delta=0.05, alpha=2.0,
                   r=0.02, h=0.06, sigma=0.25, sigma0=0.15, x0=2.0)
    return make_population(agents=[a, b], weights=[0.3, 0.7], n_cells=n)


@pytest.fixture
def make_config_dict():
    """Factory for run-config documents as they appear on disk."""
    def _make(n_cells: int = 100, types: Optional[list] = None, **top) -> Dict[str, Any]:
        if types is None:
            types = [{
                "weight": 1.0,
                "x0": 1.0,
                "prefs": {"delta": 0.1, "gamma": 2.0, "psi": 2.0, "theta": 0.5, "alpha": 1.0},
                "market": {"r": 0.02, "h": 0.05, "sigma": 0.2, "sigma0": 0.1},
            }]
        doc = {
            "regime": "primary",
            "T": 1.0,
            "grid": {"n_cells": n_cells},
            "population": types,
            "sim": {"n_paths": 2000, "seed": 7, "antithetic": False},
        }
        doc.update(top)
        return doc
    return _make


@pytest.fixture
def write_config(tmp_path):
    """Write a config document to tmp_path and return its path."""
    def _write(doc: Dict[str, Any], name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path
    return _write
