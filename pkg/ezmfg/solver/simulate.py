"""Exact simulation of equilibrium log-wealth and the verification checks built on it.

Coefficients and rates are piecewise constant, so each cell's log-wealth
increment is exactly Gaussian. Paths are produced in fixed-size blocks; each
block draws from its own Philox stream keyed by (stream, block), and blocks
are reduced in index order. Results therefore depend only on the seed and
the inputs, never on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Sequence, Tuple

import numpy as np

from ezmfg.common.logger import setup_logger
from ezmfg.core.config import app_config
from ezmfg.model import Population
from ezmfg.solver import SolverError
from ezmfg.solver.mfg import MfgEquilibrium
from ezmfg.solver.ode import GridFunction, integrate

logger = setup_logger('sim')

COMMON_STREAM = 2**32 - 1
ABS_TOL = 1e-9
DETERMINISTIC_TOL = 1e-6
SIGMA_LEVEL = 3.0
VARIANCE_FLOOR = 1e-12

CommonMode = Literal["shared", "per_path"]


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10000
    seed: int = 0
    dt_report: float | None = None
    antithetic: bool = False
    block_size: int = 2048

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be at least 1, got {self.n_paths}")
        if self.block_size < 2:
            raise ValueError(f"block_size must be at least 2, got {self.block_size}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.antithetic and (self.n_paths % 2 or self.block_size % 2):
            raise ValueError("antithetic sampling needs an even n_paths and block_size")
        if self.dt_report is not None and not self.dt_report > 0:
            raise ValueError("dt_report must be positive")

    def block_sizes(self) -> List[int]:
        full, rest = divmod(self.n_paths, self.block_size)
        return [self.block_size] * full + ([rest] if rest else [])

    def report_indices(self, grid: np.ndarray) -> np.ndarray:
        """Grid nodes at which paths are reported."""
        n_cells = len(grid) - 1
        if self.dt_report is None:
            return np.arange(n_cells + 1)
        dt = np.diff(grid)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("dt_report needs a uniform grid")
        step = self.dt_report / dt[0]
        stride = int(round(step))
        if stride < 1 or abs(step - stride) > 1e-9 * max(1.0, step) or n_cells % stride:
            raise ValueError(f"dt_report={self.dt_report} does not divide the grid cells")
        return np.arange(0, n_cells + 1, stride)


# ── statistics ──

@dataclass
class RunningMoments:
    """Mean and sum of squared deviations, merged pairwise (order-stable)."""
    count: int = 0
    mean: Any = 0.0
    m2: Any = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "RunningMoments":
        values = np.asarray(values, dtype=float)
        mean = values.mean(axis=0)
        return cls(count=values.shape[0], mean=mean, m2=((values - mean) ** 2).sum(axis=0))

    @classmethod
    def combine(cls, parts: Sequence["RunningMoments"]) -> "RunningMoments":
        total = cls()
        for part in parts:
            total.merge(part)
        return total

    def merge(self, other: "RunningMoments") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / n)
        self.count = n

    @property
    def variance(self):
        if self.count < 2:
            return np.zeros_like(np.asarray(self.mean, dtype=float))
        return self.m2 / (self.count - 1)

    @property
    def std_error(self):
        if self.count < 1:
            return np.zeros_like(np.asarray(self.mean, dtype=float))
        return np.sqrt(self.variance / self.count)


@dataclass
class CheckResult:
    name: str
    estimate: float
    std_error: float
    tolerance: float
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "details": self.details,
        }


@dataclass
class SimulationReport:
    checks: Dict[str, CheckResult] = field(default_factory=dict)
    paths_summary: List[Dict[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def add(self, check: CheckResult) -> None:
        self.checks[check.name] = check

    def to_dict(self) -> Dict[str, Any]:
        return {
            "checks": {name: check.to_dict() for name, check in self.checks.items()},
            "paths_summary": self.paths_summary,
        }


def within_band(residual: float, std_error: float, abs_tol: float = ABS_TOL) -> bool:
    return abs(residual) <= SIGMA_LEVEL * std_error + abs_tol


def has_variance(std_error, scale=1.0) -> np.ndarray:
    """Standard errors above rounding level, relative to max(1, |scale|)."""
    return np.asarray(std_error, dtype=float) > VARIANCE_FLOOR * np.maximum(1.0, np.abs(scale))


def standardized(residual, std_error, scale=1.0, abs_tol: float = ABS_TOL):
    """|residual| / std_error.

    Points whose standard error is at rounding level (see `has_variance`)
    are deterministic: they count as 0 when |residual| <= abs_tol max(1, |scale|)
    and as inf otherwise.
    """
    residual = np.abs(np.asarray(residual, dtype=float))
    std_error = np.broadcast_to(np.asarray(std_error, dtype=float), residual.shape)
    magnitude = np.broadcast_to(np.maximum(1.0, np.abs(scale)), residual.shape)
    noisy = has_variance(std_error, magnitude)
    flat = np.where(residual <= abs_tol * magnitude, 0.0, np.inf)
    return np.divide(residual, std_error, out=flat, where=noisy)


# ── random streams ──

def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one (stream, block) key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def standard_normals(rng: np.random.Generator, n: int, m: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal((n, m))
    half = rng.standard_normal((n // 2, m))
    return np.concatenate([half, -half], axis=0)


def pair_average(values: np.ndarray, antithetic: bool) -> np.ndarray:
    """Average antithetic partners (first half against second half)."""
    if not antithetic:
        return values
    half = values.shape[0] // 2
    return 0.5 * (values[:half] + values[half:])


# ── path sampling ──

@dataclass(frozen=True)
class WealthRates:
    """Per-type cell quantities driving log-wealth."""
    log_x0: np.ndarray     # (K,)
    drift: np.ndarray      # (K, M) exact mean increment per cell, consumption included
    vol: np.ndarray        # (K, M) pi sigma
    common_vol: np.ndarray  # (K, M) pi sigma0
    loading: np.ndarray    # (M,) common-noise loading of the externality

    @classmethod
    def from_equilibrium(cls, eq: MfgEquilibrium) -> "WealthRates":
        pop = eq.population
        S = pop.stack(lambda a: a.market.variance)
        r = pop.stack(lambda a: a.market.r)
        h = pop.stack(lambda a: a.market.h)
        pi = eq.pi_cells
        consumed = np.array([curve.cell_integrals() for curve in eq.curves])
        drift = (r + pi * h - 0.5 * pi ** 2 * S) * pop.dt[None, :] - consumed
        return cls(
            log_x0=np.log(pop.stack(lambda a: a.x0)),
            drift=drift,
            vol=pi * pop.stack(lambda a: a.market.sigma),
            common_vol=pi * pop.stack(lambda a: a.market.sigma0),
            loading=np.array(eq.common_loading),
        )


def sample_log_wealth(
    log_x0: float,
    drift: np.ndarray,
    vol: np.ndarray,
    common_vol: np.ndarray,
    dt: np.ndarray,
    idio: np.ndarray,
    common_increments: np.ndarray,
) -> np.ndarray:
    """Log-wealth at every node from standard normals and common Brownian increments.

    `idio` has shape (n, M); `common_increments` (n, M) or (1, M) for a shared path.
    """
    steps = drift[None, :] + vol[None, :] * np.sqrt(dt)[None, :] * idio + common_vol[None, :] * common_increments
    out = np.empty((idio.shape[0], len(dt) + 1))
    out[:, 0] = log_x0
    np.cumsum(steps, axis=1, out=out[:, 1:])
    out[:, 1:] += log_x0
    return out


@dataclass
class PathBlock:
    index: int
    log_wealth: np.ndarray       # (K_selected, n, M+1)
    common_increments: np.ndarray  # (n or 1, M)
    common_level: np.ndarray     # (n or 1, M+1) cumulative loading * dW0
    antithetic: bool

    def pair_average(self, values: np.ndarray) -> np.ndarray:
        return pair_average(values, self.antithetic)


def shared_common_increments(sim: SimConfig, dt: np.ndarray) -> np.ndarray:
    """One common Brownian path for the whole run, shape (1, M)."""
    return np.sqrt(dt)[None, :] * stream(sim.seed, COMMON_STREAM).standard_normal((1, len(dt)))


def sample_block(
    rates: WealthRates,
    grid: np.ndarray,
    sim: SimConfig,
    block: int,
    types: Sequence[int],
    common: CommonMode | np.ndarray,
) -> PathBlock:
    """Simulate one block of paths for the selected types.

    `common` is "per_path" for independent common noise on every path, or an
    array of shared common increments.
    """
    n = sim.block_sizes()[block]
    dt = np.diff(grid)
    if isinstance(common, str):
        if common != "per_path":
            raise ValueError(f"unknown common-noise mode {common!r}")
        z0 = standard_normals(stream(sim.seed, COMMON_STREAM, block), n, len(dt), sim.antithetic)
        dW0 = np.sqrt(dt)[None, :] * z0
    else:
        dW0 = np.asarray(common, dtype=float)
    paths = np.array([
        sample_log_wealth(
            rates.log_x0[k], rates.drift[k], rates.vol[k], rates.common_vol[k], dt,
            standard_normals(stream(sim.seed, k, block), n, len(dt), sim.antithetic),
            dW0,
        )
        for k in types
    ])
    level = np.zeros((dW0.shape[0], len(dt) + 1))
    np.cumsum(rates.loading[None, :] * dW0, axis=1, out=level[:, 1:])
    return PathBlock(index=block, log_wealth=paths, common_increments=dW0, common_level=level, antithetic=sim.antithetic)


def run_blocks(sim: SimConfig, fn: Callable[[int], Any]) -> List[Any]:
    """Evaluate fn on every block index; results come back in block order."""
    n_blocks = len(sim.block_sizes())
    workers = max(1, min(app_config.sim_threads, n_blocks))
    if workers == 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


@dataclass
class WealthPaths:
    report_times: np.ndarray
    log_wealth: np.ndarray          # (K, n_paths, R)
    common_increments: np.ndarray   # (1, M) shared or (n_paths, M) per path


def simulate_log_wealth(
    population: Population,
    eq: MfgEquilibrium,
    sim: SimConfig,
    common: CommonMode = "shared",
) -> WealthPaths:
    """Per-type log-wealth paths at the reporting nodes."""
    grid = population.grid
    rates = WealthRates.from_equilibrium(eq)
    report = sim.report_indices(grid)
    shared = shared_common_increments(sim, np.diff(grid)) if common == "shared" else "per_path"
    types = range(population.n_types)

    def one(b: int) -> Tuple[np.ndarray, np.ndarray]:
        block = sample_block(rates, grid, sim, b, types, shared)
        return block.log_wealth[:, :, report], block.common_increments

    parts = run_blocks(sim, one)
    log_wealth = np.concatenate([p[0] for p in parts], axis=1)
    if common == "shared":
        increments = parts[0][1]
    else:
        increments = np.concatenate([p[1] for p in parts], axis=0)
    return WealthPaths(report_times=grid[report], log_wealth=log_wealth, common_increments=increments)


# ── checks ──

def _has_common_noise(population: Population) -> bool:
    return any(np.any(a.market.sigma0 != 0.0) for a in population.agents)


def _deterministic_fixed_point(population: Population, eq: MfgEquilibrium, report: np.ndarray) -> CheckResult:
    """Without common noise the conditional mean log-wealth is deterministic.

    The mean is rebuilt by trapezoid quadrature of the consumption path and
    compared with the closed-form externality.
    """
    grid = population.grid
    weights = population.weights
    rates = WealthRates.from_equilibrium(eq)
    consumed_exact = np.array([curve.cell_integrals() for curve in eq.curves])
    investment_part = rates.drift + consumed_exact   # drift without consumption
    mean_log_c = weights @ np.log(eq.c_path)

    residuals = []
    for j in report:
        t = grid[j]
        per_type = [
            rates.log_x0[k] + investment_part[k, :j].sum() - integrate(GridFunction(grid, eq.c_path[k]), 0.0, t)
            for k in range(population.n_types)
        ]
        mean_log_x = float(weights @ np.array(per_type))
        if j < len(grid) - 1:
            residuals.append(mean_log_c[j] + mean_log_x - eq.nu_hat[j])
        else:
            residuals.append(mean_log_x - eq.log_wealth_mean[-1])
    residuals = np.abs(np.array(residuals))
    worst = float(residuals.max())
    return CheckResult(
        name="fixed-point",
        estimate=worst,
        std_error=0.0,
        tolerance=DETERMINISTIC_TOL,
        passed=worst <= DETERMINISTIC_TOL,
        details={"mode": "deterministic", "n_report": int(len(report))},
    )


def fixed_point_residual(population: Population, eq: MfgEquilibrium, sim: SimConfig) -> SimulationReport:
    """Compare the simulated externality with the closed-form one along one common path."""
    grid = population.grid
    report = sim.report_indices(grid)
    out = SimulationReport()
    if not _has_common_noise(population):
        out.add(_deterministic_fixed_point(population, eq, report))
        return out

    rates = WealthRates.from_equilibrium(eq)
    shared = shared_common_increments(sim, np.diff(grid))
    types = range(population.n_types)

    def one(b: int) -> Tuple[RunningMoments, RunningMoments]:
        block = sample_block(rates, grid, sim, b, types, shared)
        sel = np.transpose(block.log_wealth[:, :, report], (1, 0, 2))   # (n, K, R)
        return RunningMoments.of(block.pair_average(sel)), RunningMoments.of(block.log_wealth[:, :, -1].T)

    parts = run_blocks(sim, one)
    moments = RunningMoments.combine([p[0] for p in parts])
    terminal = RunningMoments.combine([p[1] for p in parts])
    level = np.zeros(len(grid))
    level[1:] = np.cumsum(rates.loading * shared[0])

    weights = population.weights
    mean_log_x = weights @ moments.mean                          # (R,)
    se = np.sqrt((weights[:, None] ** 2 * moments.variance).sum(axis=0) / moments.count)
    mean_log_c = weights @ np.log(eq.c_path[:, report])
    is_terminal = report == len(grid) - 1
    estimate = np.where(is_terminal, mean_log_x, mean_log_c + mean_log_x)
    target = np.where(is_terminal, eq.log_wealth_mean[report], eq.nu_hat[report]) + level[report]
    residual = estimate - target
    z = standardized(residual, se, target)
    noisy = has_variance(se, target)
    # deterministic nodes that pass never outrank a node with sampling noise
    rank = np.where(noisy | np.isinf(z), z, -1.0)
    worst = int(np.argmax(rank)) if np.any(rank >= 0.0) else int(np.argmax(np.abs(residual)))
    passed = bool(np.all(z <= SIGMA_LEVEL))
    logger.info(f"fixed point: max standardized residual {float(z[worst]):.3f} at t={grid[report][worst]:.4g}")

    out.add(CheckResult(
        name="fixed-point",
        estimate=float(residual[worst]),
        std_error=float(se[worst]) if noisy[worst] else 0.0,
        tolerance=SIGMA_LEVEL,
        passed=passed,
        details={
            "mode": "monte-carlo",
            "max_standardized_residual": float(z[worst]),
            "worst_time": float(grid[report][worst]),
            "n_noisy_nodes": int(noisy.sum()),
            "n_paths": sim.n_paths,
        },
    ))
    out.paths_summary = [
        {"type": k, "mean_log_x_T": float(terminal.mean[k]), "var_log_x_T": float(terminal.variance[k])}
        for k in range(population.n_types)
    ]
    return out


def best_response_gap(
    population: Population,
    eq: MfgEquilibrium,
    type_index: int,
    eps_list: Sequence[float],
) -> CheckResult:
    """Utility loss of perturbing one type's equilibrium strategy.

    Consumption is scaled by (1 + eps) and investment shifted by eps while the
    externality stays at its equilibrium level. Gaps are V0(eps) - V0(0) and
    must be non-positive with quadratic decay.
    """
    from ezmfg.solver.utility import Externality, equilibrium_strategy, evaluate_proportional

    agent = population.agents[type_index]
    ext = Externality.from_equilibrium(eq)
    base = equilibrium_strategy(eq, type_index)
    V_star = evaluate_proportional(agent, base, ext, population.grid, eq.regime).V0
    tol = 1e-10 * max(1.0, abs(V_star))

    gaps: Dict[str, Dict[float, float | None]] = {"consumption": {}, "investment": {}}
    diagnostics: List[str] = []
    for kind in gaps:
        for eps in eps_list:
            strategy = base.perturbed(c_scale=1.0 + eps) if kind == "consumption" else base.perturbed(pi_shift=eps)
            try:
                V = evaluate_proportional(agent, strategy, ext, population.grid, eq.regime).V0
            except SolverError as exc:
                diagnostics.append(f"{kind} eps={eps}: {exc}")
                gaps[kind][float(eps)] = None
                continue
            gaps[kind][float(eps)] = V - V_star

    ratios: Dict[str, float] = {}
    for kind, by_eps in gaps.items():
        for sign, label in ((1.0, "+"), (-1.0, "-")):
            big, small = by_eps.get(sign * 0.1), by_eps.get(sign * 0.05)
            if big is not None and small is not None and small < 0.0:
                ratios[f"{kind}{label}"] = big / small

    finite = [g for by_eps in gaps.values() for g in by_eps.values() if g is not None]
    worst = max(finite) if finite else math.nan
    passed = (
        not diagnostics
        and all(g <= tol for g in finite)
        and all(3.5 <= ratio <= 4.5 for ratio in ratios.values())
    )
    return CheckResult(
        name=f"best-response[{type_index}]",
        estimate=float(worst),
        std_error=0.0,
        tolerance=tol,
        passed=bool(passed),
        details={
            "V0": V_star,
            "gaps": {kind: {repr(e): g for e, g in by_eps.items()} for kind, by_eps in gaps.items()},
            "ratios": ratios,
            "diagnostics": diagnostics,
        },
    )
