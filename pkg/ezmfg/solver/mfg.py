"""Closed-form mean-field equilibrium for deterministic coefficients.

All per-type quantities are arrays with the type on axis 0. Cell arrays have
shape (K, M) and hold the value on [t_k, t_{k+1}); node arrays have shape
(K, M + 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ezmfg.common.logger import setup_logger
from ezmfg.model import Population, Regime, validate
from ezmfg.solver import InconsistencyError, SolverError
from ezmfg.solver.ode import GridFunction, RiccatiCurve, riccati_closed_form, rk4_backward

logger = setup_logger('solver')

PI_CONSISTENCY_TOL = 1e-12
TERMINAL_TOL = 1e-9


@dataclass(frozen=True)
class _Params:
    """Population parameters stacked per type."""
    weights: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    x0: np.ndarray
    r: np.ndarray
    h: np.ndarray
    sigma: np.ndarray
    sigma0: np.ndarray

    @classmethod
    def of(cls, population: Population) -> "_Params":
        stack = population.stack
        return cls(
            weights=population.weights,
            delta=stack(lambda a: a.prefs.delta),
            gamma=stack(lambda a: a.prefs.gamma),
            psi=stack(lambda a: a.prefs.psi),
            theta=stack(lambda a: a.prefs.theta),
            alpha=stack(lambda a: a.prefs.alpha),
            x0=stack(lambda a: a.x0),
            r=stack(lambda a: a.market.r),
            h=stack(lambda a: a.market.h),
            sigma=stack(lambda a: a.market.sigma),
            sigma0=stack(lambda a: a.market.sigma0),
        )

    @property
    def variance(self) -> np.ndarray:
        return self.sigma ** 2 + self.sigma0 ** 2

    @property
    def theta_tilde(self) -> np.ndarray:
        return (1.0 - self.gamma) / (1.0 - 1.0 / self.psi)

    @property
    def coupling(self) -> np.ndarray:
        """theta (psi - 1), the weight of the population in the consumption rule."""
        return self.theta * (self.psi - 1.0)

    def mean(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))

    def col(self, values: np.ndarray) -> np.ndarray:
        return values[:, None]


@dataclass(frozen=True)
class RiccatiData:
    A: np.ndarray   # (K, M)
    B: np.ndarray   # (K, M)
    D: np.ndarray   # (K,)


@dataclass(frozen=True)
class MfgEquilibrium:
    """Mean-field equilibrium and the quantities needed to evaluate and simulate it."""
    population: Population = field(repr=False)
    pi_cells: np.ndarray          # (K, M)
    Z0_cells: np.ndarray          # (K, M)
    riccati: RiccatiData
    curves: Tuple[RiccatiCurve, ...] = field(repr=False)
    c_path: np.ndarray            # (K, M+1) Riccati solution, left limit D at T
    c_star: np.ndarray            # (K, M+1) with c_star[:, -1] = 1
    Y_hat: np.ndarray             # (K, M+1)
    Y_tilde: np.ndarray           # (K, M+1)
    Y: np.ndarray                 # (K, M+1) deterministic part of the value exponent
    log_wealth_mean: np.ndarray   # (M+1,) Ebar[E log X_t | common noise] without the noise term
    drift_mean: np.ndarray        # (M,) Ebar[r + pi h - pi^2 S / 2]
    common_loading: np.ndarray    # (M,) Ebar[pi sigma0]
    nu_hat: np.ndarray            # (M+1,) deterministic part of the externality
    V0: np.ndarray                # (K,) equilibrium utility at time 0
    regime: Regime = Regime.PRIMARY

    @property
    def grid(self) -> np.ndarray:
        return self.population.grid

    @property
    def pi_star(self) -> np.ndarray:
        """Investment at the grid nodes; the node T carries the last cell's value."""
        return np.concatenate([self.pi_cells, self.pi_cells[:, -1:]], axis=1)

    @property
    def Z0(self) -> np.ndarray:
        return np.concatenate([self.Z0_cells, self.Z0_cells[:, -1:]], axis=1)

    def consumption_at(self, k: int, t: float, cell: int) -> float:
        """Equilibrium consumption rate of type k at any t in the cell (left limit at T)."""
        return self.curves[k].at(t, cell)

    def log_wealth_mean_at(self, t: float, cell: int) -> float:
        """Deterministic part of the population mean log-wealth at any t in the cell."""
        grid = self.grid
        consumed = sum(
            w * curve.integral_from_node(t, cell)
            for w, curve in zip(self.population.weights, self.curves)
        )
        return float(self.log_wealth_mean[cell] + self.drift_mean[cell] * (t - grid[cell]) - consumed)

    def nu_hat_at(self, t: float, cell: int) -> float:
        """Deterministic externality level inside a cell (left limit at T)."""
        log_c = sum(
            w * math.log(curve.at(t, cell))
            for w, curve in zip(self.population.weights, self.curves)
        )
        return log_c + self.log_wealth_mean_at(t, cell)


# ── coupling terms ──

def _common_noise_terms(p: _Params) -> Tuple[np.ndarray, np.ndarray]:
    """Ebar[h sigma0/(gamma S)] and Ebar[theta(1-gamma) sigma0^2/(gamma S)] per cell."""
    gS = p.col(p.gamma) * p.variance
    e = p.mean(p.h * p.sigma0 / gS)
    d = p.mean(p.col(p.theta * (1.0 - p.gamma)) * p.sigma0 ** 2 / gS)
    return e, d


def _Z0_cells(p: _Params) -> np.ndarray:
    e, d = _common_noise_terms(p)
    return -p.col(p.theta * (1.0 - p.gamma)) * (e / (1.0 + d))[None, :]


def _pi_cells(p: _Params) -> np.ndarray:
    """Equilibrium investment, computed both ways and cross-checked."""
    e, d = _common_noise_terms(p)
    gS = p.col(p.gamma) * p.variance
    closed = p.h / gS - (p.sigma0 / gS) * p.col(p.theta * (1.0 - p.gamma)) * (e / (1.0 + d))[None, :]
    merton, hedge = p.h / gS, p.sigma0 * _Z0_cells(p) / gS
    from_z = merton + hedge
    # measured against the size of both parts of the rule
    gap = np.max(np.abs(closed - from_z) / (1.0 + np.abs(merton) + np.abs(hedge)))
    if gap > PI_CONSISTENCY_TOL:
        raise InconsistencyError(f"investment forms disagree by {gap:.3e}")
    return closed


def _check_population(population: Population, regime: Regime) -> _Params:
    validate(population, regime).raise_for_violations()
    return _Params.of(population)


def compute_Z0(population: Population, t: float, regime: Regime = Regime.PRIMARY) -> np.ndarray:
    """Per-type common-noise loading of the value process at grid time t."""
    cell = population.cell_index(t)
    return _Z0_cells(_check_population(population, regime))[:, cell]


def compute_pi_star(population: Population, t: float, regime: Regime = Regime.PRIMARY) -> np.ndarray:
    """Per-type equilibrium fraction of wealth in the risky asset at grid time t."""
    cell = population.cell_index(t)
    return _pi_cells(_check_population(population, regime))[:, cell]


# ── Riccati coefficients ──

def _log_terminal_shift(p: _Params) -> np.ndarray:
    """m = -psi log delta + (psi/theta_tilde) log alpha per type."""
    return -p.psi * np.log(p.delta) + (p.psi / p.theta_tilde) * np.log(p.alpha)


def _riccati_from(p: _Params, Z0: np.ndarray, pi: np.ndarray) -> RiccatiData:
    S = p.variance
    gamma, tg = p.col(p.gamma), p.col(p.theta * (1.0 - p.gamma))
    wealth_drift = p.mean(p.r + pi * p.h - 0.5 * pi ** 2 * S)
    A = (
        0.5 * Z0 ** 2
        + (1.0 - gamma) * p.r
        + ((1.0 - gamma) / (2.0 * gamma)) * (p.h + p.sigma0 * Z0) ** 2 / S
        - p.col(p.delta * p.theta_tilde)
        - tg * wealth_drift[None, :]
    )
    ratio = p.col(p.psi / p.theta_tilde)
    share = p.coupling / (1.0 + p.mean(p.coupling))
    B = ratio * A - p.col(share) * p.mean(ratio * A)[None, :]
    m = _log_terminal_shift(p)
    D = np.exp(share * p.mean(m) - m)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(D)) and np.all(D > 0)):
        raise SolverError("Riccati coefficients are not finite", error_code="riccati_data")
    return RiccatiData(A=A, B=B, D=D)


def compute_riccati_data(population: Population, regime: Regime = Regime.PRIMARY) -> RiccatiData:
    """Coefficients A, B and terminal values D of the consumption Riccati equations."""
    p = _check_population(population, regime)
    return _riccati_from(p, _Z0_cells(p), _pi_cells(p))


def _curves(population: Population, riccati: RiccatiData) -> Tuple[RiccatiCurve, ...]:
    return tuple(
        riccati_closed_form(GridFunction(population.grid, riccati.B[k], "cell"), float(riccati.D[k]))
        for k in range(population.n_types)
    )


def solve_consumption(
    population: Population,
    riccati: RiccatiData | None = None,
    regime: Regime = Regime.PRIMARY,
) -> np.ndarray:
    """Equilibrium consumption rates at the grid nodes, with c(T) = 1."""
    if riccati is None:
        riccati = compute_riccati_data(population, regime)
    c = np.array([curve.values for curve in _curves(population, riccati)])
    c[:, -1] = 1.0
    return c


# ── equilibrium assembly ──

def solve_mfg(population: Population, regime: Regime = Regime.PRIMARY) -> MfgEquilibrium:
    """Assemble the full mean-field equilibrium."""
    p = _check_population(population, regime)
    Z0 = _Z0_cells(p)
    pi = _pi_cells(p)
    riccati = _riccati_from(p, Z0, pi)
    curves = _curves(population, riccati)

    c_path = np.array([curve.values for curve in curves])
    c_star = c_path.copy()
    c_star[:, -1] = 1.0

    # Invert the consumption map for Y_hat: averaging the log-consumption
    # identity gives Ebar[log c] = -Ebar[Y_hat] / (1 + Ebar[theta(psi-1)]).
    log_c = np.log(c_path)
    Y_hat = -p.col(p.coupling) * p.mean(log_c)[None, :] - log_c
    Y_tilde = p.col(p.theta_tilde / p.psi) * Y_hat + p.col(p.theta_tilde * np.log(p.delta) - np.log(p.alpha))
    terminal_gap = float(np.max(np.abs(Y_tilde[:, -1])))
    if not terminal_gap <= TERMINAL_TOL:
        raise InconsistencyError(f"Y_tilde(T) = {terminal_gap:.3e}, expected 0")

    dt = population.dt
    S = p.variance
    drift_mean = p.mean(p.r + pi * p.h - 0.5 * pi ** 2 * S)
    consumed = np.array([curve.cell_integrals() for curve in curves])
    log_wealth_mean = np.concatenate([[0.0], np.cumsum(drift_mean * dt - p.mean(consumed))])
    log_wealth_mean += float(p.mean(np.log(p.x0)))
    common_loading = p.mean(pi * p.sigma0)

    # Deterministic part of the externality; the node T holds the left limit.
    denom = 1.0 + p.mean(p.coupling)
    nu_hat = (
        p.mean(p.psi * np.log(p.delta))
        - p.mean((p.psi / p.theta_tilde) * np.log(p.alpha))
        - p.mean(p.col(p.psi / p.theta_tilde) * Y_tilde)
    ) / denom + log_wealth_mean

    Y = Y_tilde - p.col(p.theta * (1.0 - p.gamma)) * log_wealth_mean[None, :]
    V0 = p.alpha * p.x0 ** (1.0 - p.gamma) * np.exp(Y[:, 0]) / (1.0 - p.gamma)

    logger.debug(
        f"solved {population.n_types} type(s) on {population.n_cells} cells; "
        f"c*(0)={c_star[:, 0].tolist()} pi*(0)={pi[:, 0].tolist()}"
    )
    return MfgEquilibrium(
        population=population,
        pi_cells=pi,
        Z0_cells=Z0,
        riccati=riccati,
        curves=curves,
        c_path=c_path,
        c_star=c_star,
        Y_hat=Y_hat,
        Y_tilde=Y_tilde,
        Y=Y,
        log_wealth_mean=log_wealth_mean,
        drift_mean=drift_mean,
        common_loading=common_loading,
        nu_hat=nu_hat,
        V0=V0,
        regime=Regime(regime),
    )


def y_tilde_by_quadrature(eq: MfgEquilibrium) -> np.ndarray:
    """Y_tilde from its backward integral equation, using exact cell integrals.

    Y_tilde(t) = int_t^T theta(1-gamma) Ebar[c] + (1-gamma)/(psi-1) c + A ds.
    """
    p = _Params.of(eq.population)
    consumed = np.array([curve.cell_integrals() for curve in eq.curves])
    integrand = (
        p.col(p.theta * (1.0 - p.gamma)) * p.mean(consumed)[None, :]
        + p.col((1.0 - p.gamma) / (p.psi - 1.0)) * consumed
        + eq.riccati.A * eq.population.dt[None, :]
    )
    tail = np.cumsum(integrand[:, ::-1], axis=1)[:, ::-1]
    return np.concatenate([tail, np.zeros((p.weights.size, 1))], axis=1)


def common_noise_loading_check(eq: MfgEquilibrium) -> float:
    """Largest gap between Z0 and -theta(1-gamma) Ebar[pi sigma0]."""
    p = _Params.of(eq.population)
    implied = -p.col(p.theta * (1.0 - p.gamma)) * eq.common_loading[None, :]
    return float(np.max(np.abs(eq.Z0_cells - implied)))


# ── power-utility reduction ──

def power_utility_consumption(population: Population, refine: int = 10) -> np.ndarray:
    """Consumption under discounted power utility, computed without theta_tilde.

    Valid only when psi * gamma = 1 for every type. The rates come from the
    linear equation u' = -1 - B u for u = 1/c, integrated by RK4.
    """
    p = _check_population(population, Regime.ALTERNATIVE)
    if np.any(np.abs(p.psi * p.gamma - 1.0) > 1e-12):
        raise ValueError("power-utility reduction needs psi * gamma = 1 for every type")

    eis = 1.0 / p.gamma
    Z0, pi = _Z0_cells(p), _pi_cells(p)
    S = p.variance
    gamma = p.col(p.gamma)
    A = (
        0.5 * Z0 ** 2
        + (1.0 - gamma) * p.r
        + ((1.0 - gamma) / (2.0 * gamma)) * (p.h + p.sigma0 * Z0) ** 2 / S
        - p.col(p.delta)
        - p.col(p.theta * (1.0 - p.gamma)) * p.mean(p.r + pi * p.h - 0.5 * pi ** 2 * S)[None, :]
    )
    weight = p.theta * (eis - 1.0)
    B = p.col(eis) * A - p.col(weight / (1.0 + p.mean(weight))) * p.mean(p.col(eis) * A)[None, :]
    m = -eis * np.log(p.delta) + eis * np.log(p.alpha)
    D = np.exp(weight / (1.0 + p.mean(weight)) * p.mean(m) - m)

    def rhs(t, u, cell):
        return -1.0 - B[:, cell] * u

    u = rk4_backward(rhs, 1.0 / D, population.grid, refine=refine).values
    c = (1.0 / u).T
    c[:, -1] = 1.0
    return c


def equilibrium_summary(eq: MfgEquilibrium) -> List[Dict[str, float]]:
    """Per-type headline numbers for logs and reports."""
    return [
        {
            "type": k,
            "pi_star_0": float(eq.pi_cells[k, 0]),
            "c_star_0": float(eq.c_star[k, 0]),
            "D": float(eq.riccati.D[k]),
            "V0": float(eq.V0[k]),
        }
        for k in range(eq.population.n_types)
    ]
