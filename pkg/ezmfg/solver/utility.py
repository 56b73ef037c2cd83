"""Epstein-Zin aggregator and utility of proportional strategies.

For a strategy investing the fraction pi and consuming at rate c of wealth,
the utility is homothetic, V_t = phi(t) X_t^{1-gamma} / (1-gamma), and phi
solves a scalar backward ODE. That reduction is exact for deterministic
coefficients and is what the best-response checks are built on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Tuple

import numpy as np

from ezmfg.common.logger import setup_logger
from ezmfg.model import AgentType, PreferenceParams, Regime
from ezmfg.model.validation import ValidationResult, validate_agent
from ezmfg.solver import UtilityDomainError
from ezmfg.solver.ode import DEFAULT_REFINE, GridFunction, rk4_backward

logger = setup_logger('solver')


# ── aggregator ──

def _check_domain(c_arg, v, prefs: PreferenceParams, exponent: float) -> Tuple[np.ndarray, np.ndarray]:
    c = np.asarray(c_arg, dtype=float)
    w = (1.0 - prefs.gamma) * np.asarray(v, dtype=float)
    if np.any(~(c > 0.0)):
        raise UtilityDomainError(f"consumption argument must be positive (min {np.min(c)!r})")
    if np.any(~(w >= 0.0)):
        raise UtilityDomainError("(1 - gamma) v must be non-negative")
    if exponent < 0.0 and np.any(w == 0.0):
        raise UtilityDomainError("(1 - gamma) v must be positive when 1 - 1/theta_tilde < 0")
    return c, w


def aggregator(c_arg, v, prefs: PreferenceParams):
    """f(c, v) = delta c^{1-1/psi} / (1-1/psi) ((1-gamma) v)^{1-1/theta_tilde} - delta theta_tilde v.

    Works elementwise on arrays.
    """
    tt = prefs.theta_tilde
    exponent = 1.0 - 1.0 / tt
    c, w = _check_domain(c_arg, v, prefs, exponent)
    rho = 1.0 - 1.0 / prefs.psi
    power = np.ones_like(w) if exponent == 0.0 else w ** exponent
    out = prefs.delta * c ** rho / rho * power - prefs.delta * tt * np.asarray(v, dtype=float)
    return out if out.ndim else float(out)


def aggregator_derivs(c_arg, v, prefs: PreferenceParams):
    """Partial derivatives (f_c, f_v) of the aggregator."""
    tt = prefs.theta_tilde
    exponent = 1.0 - 1.0 / tt
    c, w = _check_domain(c_arg, v, prefs, exponent)
    if exponent != 0.0 and np.any(w == 0.0):
        raise UtilityDomainError("f_v is unbounded at (1 - gamma) v = 0")
    rho = 1.0 - 1.0 / prefs.psi
    power = np.ones_like(w) if exponent == 0.0 else w ** exponent
    f1 = prefs.delta * c ** (-1.0 / prefs.psi) * power
    if exponent == 0.0:
        first = np.zeros_like(w)
    else:
        first = prefs.delta * c ** rho / rho * exponent * (1.0 - prefs.gamma) * w ** (-1.0 / tt)
    f2 = first - prefs.delta * tt
    if f1.ndim == 0:
        return float(f1), float(f2)
    return f1, f2


# ── strategies and externalities ──

class ConsumptionRate(Protocol):
    def at(self, t: float, cell: int) -> float: ...


@dataclass(frozen=True)
class ProportionalStrategy:
    """Deterministic investment fraction (per cell) and consumption rate.

    Consumption is a rate path evaluated inside cells; its value at T is the
    left limit, the terminal consumption of all wealth being carried by the
    bequest term. `c_scale` and `pi_shift` perturb the base strategy.
    """
    pi: np.ndarray
    consumption: ConsumptionRate = field(repr=False)
    c_scale: float = 1.0
    pi_shift: float = 0.0

    @classmethod
    def constant(cls, grid: np.ndarray, pi: float, c: float) -> "ProportionalStrategy":
        n_cells = len(grid) - 1
        return cls(pi=np.full(n_cells, pi), consumption=GridFunction(grid, np.full(n_cells, c), "cell"))

    def perturbed(self, c_scale: float = 1.0, pi_shift: float = 0.0) -> "ProportionalStrategy":
        return replace(self, c_scale=self.c_scale * c_scale, pi_shift=self.pi_shift + pi_shift)

    def pi_at(self, cell: int) -> float:
        return float(self.pi[cell]) + self.pi_shift

    def c_at(self, t: float, cell: int) -> float:
        return self.c_scale * self.consumption.at(t, cell)


@dataclass(frozen=True)
class Externality:
    """Deterministic part of the log-consumption externality.

    `flow(t, cell)` is the level used in the running aggregator, `terminal`
    the level in the bequest term, and `loading` the per-cell exposure of the
    externality to the common noise.
    """
    flow: Callable[[float, int], float] = field(repr=False)
    terminal: float
    loading: np.ndarray

    @classmethod
    def zero(cls, grid: np.ndarray) -> "Externality":
        return cls(flow=lambda t, cell: 0.0, terminal=0.0, loading=np.zeros(len(grid) - 1))

    @classmethod
    def from_equilibrium(cls, eq) -> "Externality":
        """Equilibrium externality of a solved mean-field game."""
        return cls(
            flow=eq.nu_hat_at,
            terminal=float(eq.log_wealth_mean[-1]),
            loading=np.array(eq.common_loading, dtype=float),
        )


@dataclass(frozen=True)
class UtilityCurve:
    phi: GridFunction
    V0: float
    gamma: float

    @property
    def scaled_V0(self) -> float:
        """(1 - gamma) V0, the positive-utility ordering."""
        return (1.0 - self.gamma) * self.V0


# ── evaluation ──

def evaluate_proportional(
    agent: AgentType,
    strategy: ProportionalStrategy,
    externality: Externality,
    grid: np.ndarray,
    regime: Regime = Regime.PRIMARY,
    refine: int = DEFAULT_REFINE,
) -> UtilityCurve:
    """Utility of a proportional strategy against a fixed externality."""
    grid = np.asarray(grid, dtype=float)
    check = ValidationResult()
    validate_agent(agent, regime, len(grid) - 1, check, "agent")
    check.raise_for_violations()

    p, m = agent.prefs, agent.market
    tt = p.theta_tilde
    rho = 1.0 - 1.0 / p.psi
    exponent = 1.0 - 1.0 / tt
    one_g = 1.0 - p.gamma

    for k in range(len(grid) - 1):
        if not strategy.c_at(grid[k], k) > 0.0:
            raise UtilityDomainError(f"consumption rate must be positive (cell {k})")

    def rhs(t, phi, cell):
        phi = float(phi)
        if not phi > 0.0:
            raise UtilityDomainError(f"phi left the positive half-line near t={t:.6g}")
        pi = strategy.pi_at(cell)
        c = strategy.c_at(t, cell)
        q = externality.loading[cell]
        sigma, sigma0 = m.sigma[cell], m.sigma0[cell]
        kappa = (
            one_g * (m.r[cell] + pi * m.h[cell] - c)
            - 0.5 * one_g * pi * pi * (sigma ** 2 + sigma0 ** 2)
            + 0.5 * one_g ** 2 * ((pi * sigma) ** 2 + (pi * sigma0 - p.theta * q) ** 2)
        )
        tilted = c * math.exp(-p.theta * externality.flow(t, cell))
        return -kappa * phi - p.delta * tt * (tilted ** rho * phi ** exponent - phi)

    try:
        terminal = p.alpha * math.exp(-p.theta * one_g * externality.terminal)
        phi = rk4_backward(rhs, terminal, grid, refine=refine)
    except OverflowError as exc:
        raise UtilityDomainError(f"utility ODE overflowed: {exc}")
    if np.any(phi.values <= 0.0):
        raise UtilityDomainError("phi left the positive half-line")
    V0 = float(phi.values[0]) * agent.x0 ** one_g / one_g
    return UtilityCurve(phi=phi, V0=V0, gamma=p.gamma)


def equilibrium_strategy(eq, type_index: int) -> ProportionalStrategy:
    """Equilibrium strategy of one type of a solved mean-field game."""
    return ProportionalStrategy(pi=np.array(eq.pi_cells[type_index]), consumption=eq.curves[type_index])


# ── Monte Carlo check of the utility recursion ──

@dataclass
class RecursionEstimate:
    estimate: float
    std_error: float
    V0: float

    @property
    def residual(self) -> float:
        return self.estimate - self.V0


def mc_recursion_residual(eq, type_index: int, sim) -> RecursionEstimate:
    """Monte Carlo estimate of int_0^T f ds + alpha U(terminal) minus V0.

    Paths are simulated jointly with per-path common noise; the running
    integral uses the trapezoid rule on the model grid.
    """
    from ezmfg.solver.simulate import RunningMoments, WealthRates, run_blocks, sample_block

    agent = eq.population.agents[type_index]
    p = agent.prefs
    one_g = 1.0 - p.gamma
    grid = eq.grid
    rates = WealthRates.from_equilibrium(eq)
    log_c = np.log(eq.c_path[type_index])
    Y_tilde = eq.Y_tilde[type_index]
    flow_level = eq.nu_hat
    wealth_level = eq.log_wealth_mean

    def one(b: int) -> RunningMoments:
        block = sample_block(rates, grid, sim, b, (type_index,), "per_path")
        log_x, noise = block.log_wealth[0], block.common_level
        V = p.alpha * np.exp(one_g * log_x + Y_tilde - p.theta * one_g * (wealth_level + noise)) / one_g
        tilted = np.exp(log_c + log_x - p.theta * (flow_level + noise))
        running = np.trapezoid(aggregator(tilted, V, p), grid, axis=1)
        bequest_arg = np.exp(log_x[:, -1] - p.theta * (wealth_level[-1] + noise[:, -1]))
        bequest = p.alpha * bequest_arg ** one_g / one_g
        return RunningMoments.of(block.pair_average(running + bequest))

    moments = RunningMoments.combine(run_blocks(sim, one))
    mean, se = float(moments.mean), float(moments.std_error)
    V0 = float(eq.V0[type_index])
    logger.info(f"type {type_index}: recursion estimate {mean:.10g} vs V0 {V0:.10g} (se {se:.3g})")
    return RecursionEstimate(estimate=mean, std_error=se, V0=V0)
