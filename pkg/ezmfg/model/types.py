"""Agent preferences, market coefficients and populations.

All market coefficients are piecewise constant on the cells of a time grid
0 = t_0 < t_1 < ... < t_M = T: entry k holds the value on [t_k, t_{k+1}).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Sequence, Tuple

import numpy as np


class Regime(str, Enum):
    """Parameter regime of the Epstein-Zin aggregator."""
    PRIMARY = "primary"          # psi * gamma >= 1, psi > 1
    ALTERNATIVE = "alternative"  # psi * gamma <= 1, gamma < 1, psi > 1


def _frozen_array(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PreferenceParams:
    """Epstein-Zin preferences with a relative-consumption tilt."""
    delta: float   # discount rate
    gamma: float   # relative risk aversion
    psi: float     # elasticity of intertemporal substitution
    theta: float   # competition weight
    alpha: float   # bequest weight

    def __post_init__(self):
        for name in ("delta", "gamma", "psi", "theta", "alpha"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def theta_tilde(self) -> float:
        """(1 - gamma) / (1 - 1/psi); undefined for psi == 1."""
        if self.psi == 1.0:
            raise ValueError("theta_tilde is undefined for psi = 1")
        return (1.0 - self.gamma) / (1.0 - 1.0 / self.psi)

    def to_dict(self) -> Dict[str, float]:
        return {
            "delta": self.delta,
            "gamma": self.gamma,
            "psi": self.psi,
            "theta": self.theta,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreferenceParams":
        return cls(**{k: data[k] for k in ("delta", "gamma", "psi", "theta", "alpha")})


@dataclass(frozen=True)
class MarketCoefficients:
    """Per-cell interest rate, excess return and idiosyncratic / common volatility."""
    r: np.ndarray
    h: np.ndarray
    sigma: np.ndarray
    sigma0: np.ndarray

    def __post_init__(self):
        for name in ("r", "h", "sigma", "sigma0"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        lengths = {len(self.r), len(self.h), len(self.sigma), len(self.sigma0)}
        if len(lengths) != 1:
            raise ValueError(f"market coefficient arrays differ in length: {sorted(lengths)}")

    @classmethod
    def constant(cls, n_cells: int, r: float, h: float, sigma: float, sigma0: float) -> "MarketCoefficients":
        return cls(
            r=np.full(n_cells, r),
            h=np.full(n_cells, h),
            sigma=np.full(n_cells, sigma),
            sigma0=np.full(n_cells, sigma0),
        )

    @property
    def n_cells(self) -> int:
        return len(self.r)

    @property
    def variance(self) -> np.ndarray:
        """Total volatility sigma^2 + sigma0^2 per cell."""
        return self.sigma ** 2 + self.sigma0 ** 2


@dataclass(frozen=True)
class AgentType:
    prefs: PreferenceParams
    market: MarketCoefficients
    x0: float

    def __post_init__(self):
        object.__setattr__(self, "x0", float(self.x0))


@dataclass(frozen=True)
class Population:
    """Finite mixture of agent types on a shared time grid."""
    types: Tuple[Tuple[float, AgentType], ...]
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "types", tuple((float(w), t) for w, t in self.types))
        object.__setattr__(self, "grid", _frozen_array(self.grid))

    @classmethod
    def from_types(cls, types: Sequence[AgentType], grid: Any, weights: Sequence[float] | None = None) -> "Population":
        if weights is None:
            weights = [1.0 / len(types)] * len(types)
        return cls(types=tuple(zip(weights, types)), grid=grid)

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def n_cells(self) -> int:
        return len(self.grid) - 1

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.types])

    @property
    def agents(self) -> Tuple[AgentType, ...]:
        return tuple(t for _, t in self.types)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.grid)

    def stack(self, getter) -> np.ndarray:
        """Stack a per-type quantity into an array with the type on axis 0."""
        return np.array([getter(t) for t in self.agents], dtype=float)

    def mean(self, values: np.ndarray) -> np.ndarray:
        """Population mean over axis 0 of a per-type array."""
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))

    def node_index(self, t: float) -> int:
        """Index of grid node t; raises ValueError when t is off the grid."""
        idx = int(np.searchsorted(self.grid, t))
        for cand in (idx - 1, idx):
            if 0 <= cand < len(self.grid) and np.isclose(self.grid[cand], t, rtol=0.0, atol=1e-12 * max(1.0, self.horizon)):
                return cand
        raise ValueError(f"time {t!r} is not a grid node")

    def cell_index(self, t: float) -> int:
        """Cell whose coefficients apply at grid node t (the last cell at T)."""
        return min(self.node_index(t), self.n_cells - 1)
