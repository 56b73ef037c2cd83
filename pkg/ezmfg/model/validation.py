"""Admissibility checks for populations and population averages."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from ezmfg.model.types import AgentType, Population, Regime

WEIGHT_TOL = 1e-12
DENOMINATOR_FLOOR = 1e-6


class ModelValidationError(ValueError):
    """Raised when a population or game violates admissibility conditions."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid model")


@dataclass
class ValidationResult:
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)

    def raise_for_violations(self) -> None:
        if self.violations:
            raise ModelValidationError(self.violations)


def validate_grid(grid: np.ndarray, result: ValidationResult) -> None:
    if len(grid) < 2:
        result.add("grid: needs at least one cell")
        return
    if not np.all(np.isfinite(grid)):
        result.add("grid: contains non-finite nodes")
        return
    if grid[0] != 0.0:
        result.add(f"grid: must start at 0 (got {grid[0]})")
    if np.any(np.diff(grid) <= 0.0):
        result.add("grid: nodes must be strictly increasing")


def validate_agent(agent: AgentType, regime: Regime, n_cells: int, result: ValidationResult, where: str) -> None:
    """Check one agent type; violations are prefixed with `where`."""
    p = agent.prefs
    values = p.to_dict()
    values["x0"] = agent.x0
    if not all(np.isfinite(v) for v in values.values()):
        result.add(f"{where}: parameters must be finite")
        return

    if p.delta <= 0:
        result.add(f"{where}: delta must be positive (got {p.delta})")
    if p.gamma <= 0:
        result.add(f"{where}: gamma must be positive (got {p.gamma})")
    if p.gamma == 1.0:
        result.add(f"{where}: gamma must differ from 1")
    if p.psi <= 1.0:
        result.add(f"{where}: psi must exceed 1 (got {p.psi})")
    if p.theta < 0:
        result.add(f"{where}: theta must be non-negative (got {p.theta})")
    if p.alpha <= 0:
        result.add(f"{where}: alpha must be positive (got {p.alpha})")
    if agent.x0 <= 0:
        result.add(f"{where}: x0 must be positive (got {agent.x0})")

    if p.psi > 1.0:
        if regime is Regime.PRIMARY and p.psi * p.gamma < 1.0:
            result.add(f"{where}: primary regime requires psi*gamma >= 1 (got {p.psi * p.gamma})")
        if regime is Regime.ALTERNATIVE:
            if p.psi * p.gamma > 1.0:
                result.add(f"{where}: alternative regime requires psi*gamma <= 1 (got {p.psi * p.gamma})")
            if p.gamma >= 1.0:
                result.add(f"{where}: alternative regime requires gamma < 1 (got {p.gamma})")

    m = agent.market
    if m.n_cells != n_cells:
        result.add(f"{where}.market: expected {n_cells} cells, got {m.n_cells}")
        return
    for name in ("r", "h", "sigma", "sigma0"):
        if not np.all(np.isfinite(getattr(m, name))):
            result.add(f"{where}.market.{name}: contains non-finite values")
            return
    if np.any(m.variance <= 0.0):
        result.add(f"{where}.market: sigma^2 + sigma0^2 must be positive on every cell")


def validate(population: Population, regime: Regime = Regime.PRIMARY) -> ValidationResult:
    """Collect every admissibility violation of a population.

    Covers the grid, the type weights, each type's parameters and market
    coefficients, and the common-noise denominator of the equilibrium
    investment rule.
    """
    result = ValidationResult()
    validate_grid(population.grid, result)

    if population.n_types == 0:
        result.add("population: needs at least one type")
        return result

    weights = population.weights
    if np.any(weights <= 0.0):
        result.add("population: weights must be positive")
    elif abs(weights.sum() - 1.0) > WEIGHT_TOL:
        result.add(f"population: weights must sum to 1 (got {weights.sum()!r})")

    for k, agent in enumerate(population.agents):
        validate_agent(agent, Regime(regime), population.n_cells, result, f"types[{k}]")

    if result.ok:
        denom = equilibrium_denominator(population)
        bad = np.flatnonzero(denom < DENOMINATOR_FLOOR)
        if bad.size:
            result.add(
                f"population: singular equilibrium denominator on cell {int(bad[0])} "
                f"(1 + mean theta(1-gamma)sigma0^2/(gamma S) = {denom[bad[0]]!r})"
            )
    return result


def equilibrium_denominator(population: Population) -> np.ndarray:
    """1 + Ebar[theta (1-gamma) sigma0^2 / (gamma S)] per cell."""
    terms = population.stack(
        lambda a: a.prefs.theta * (1 - a.prefs.gamma) * a.market.sigma0 ** 2 / (a.prefs.gamma * a.market.variance)
    )
    return 1.0 + population.mean(terms)


def population_mean(population: Population, extractor: Callable[[AgentType, int], float], t: float) -> float:
    """Weighted average of extractor(agent, cell) at grid node t.

    The extractor receives the index of the cell whose coefficients apply at t
    (the last cell when t = T). Off-grid times raise ValueError.
    """
    cell = population.cell_index(t)
    values = np.array([extractor(agent, cell) for agent in population.agents], dtype=float)
    return float(population.weights @ values)
