"""Closed-form equilibrium of the N-player game and its mean-field limit.

Player arrays have the player on axis 0; cell arrays are (N, M) and node
arrays (N, M + 1), exactly as in the mean-field solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ezmfg.common.logger import setup_logger
from ezmfg.model import AgentType, Population, Regime, ValidationResult
from ezmfg.model.validation import DENOMINATOR_FLOOR, validate_agent, validate_grid
from ezmfg.solver import SingularityError
from ezmfg.solver.mfg import _Params, solve_mfg
from ezmfg.solver.ode import GridFunction, RiccatiCurve, riccati_closed_form

logger = setup_logger('solver')

COINCIDENT_GAP = 1e-10


@dataclass(frozen=True)
class NPlayerGame:
    players: Tuple[AgentType, ...]
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        grid = np.array(self.grid, dtype=float)
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def iid(cls, agent: AgentType, n: int, grid: Any) -> "NPlayerGame":
        return cls(players=(agent,) * n, grid=grid)

    @property
    def n_players(self) -> int:
        return len(self.players)

    def as_population(self) -> Population:
        """Equal-weight population view, used for stacking parameters."""
        return Population.from_types(self.players, self.grid)


@dataclass(frozen=True)
class NPlayerEquilibrium:
    game: NPlayerGame = field(repr=False)
    pi_cells: np.ndarray     # (N, M)
    c_path: np.ndarray       # (N, M+1), left limit D at T
    c_star: np.ndarray       # (N, M+1), c(T) = 1
    Zi0: np.ndarray          # (N, M)
    Zij: np.ndarray          # (N, N, M), zero diagonal
    a: np.ndarray            # (N,)
    b: np.ndarray            # (N,)
    A: np.ndarray            # (N, M)
    B: np.ndarray            # (N, M)
    D: np.ndarray            # (N,)
    phiN: np.ndarray         # (M,)
    psiN: np.ndarray         # (M,)
    curves: Tuple[RiccatiCurve, ...] = field(repr=False)

    @property
    def pi_star(self) -> np.ndarray:
        return np.concatenate([self.pi_cells, self.pi_cells[:, -1:]], axis=1)


@dataclass
class ConvergenceTable:
    """Sup-norm gaps between N-player and mean-field rates."""
    ns: List[int]
    pi_gaps: List[float]
    c_gaps: List[float]
    pi_order: float | None
    c_order: float | None

    def rows(self) -> List[Dict[str, float]]:
        return [
            {"N": n, "pi_gap": pg, "c_gap": cg}
            for n, pg, cg in zip(self.ns, self.pi_gaps, self.c_gaps)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {"rows": self.rows(), "pi_order": self.pi_order, "c_order": self.c_order}


# ── validation ──

def _denominators(p: _Params, n: int) -> np.ndarray:
    """gamma sigma^2 + (gamma - theta(1-gamma)/(N-1)) sigma0^2 per player and cell."""
    k = p.theta * (1.0 - p.gamma) / (n - 1)
    return p.col(p.gamma) * p.sigma ** 2 + p.col(p.gamma - k) * p.sigma0 ** 2


def validate_game(game: NPlayerGame, regime: Regime = Regime.PRIMARY) -> ValidationResult:
    result = ValidationResult()
    validate_grid(game.grid, result)
    n = game.n_players
    if n < 2:
        result.add(f"game: needs at least 2 players (got {n})")
        return result
    n_cells = len(game.grid) - 1
    for i, agent in enumerate(game.players):
        validate_agent(agent, Regime(regime), n_cells, result, f"players[{i}]")
    if result.ok:
        p = _Params.of(game.as_population())
        # dimensionless form, divided by gamma S
        delta = _denominators(p, n) / (p.col(p.gamma) * p.variance)
        for i in range(n):
            bad = np.flatnonzero(np.abs(delta[i]) < DENOMINATOR_FLOOR)
            if bad.size:
                result.add(f"players[{i}]: investment denominator vanishes on cell {int(bad[0])}")
        for i in range(n):
            if abs(1.0 - p.coupling[i] / (n - 1)) < DENOMINATOR_FLOOR:
                result.add(f"players[{i}]: 1 - theta(psi-1)/(N-1) vanishes")
    return result


def _check_game(game: NPlayerGame, regime: Regime) -> _Params:
    validate_game(game, regime).raise_for_violations()
    return _Params.of(game.as_population())


# ── aggregates and investment ──

def _aggregates(p: _Params, n: int) -> Tuple[np.ndarray, np.ndarray]:
    delta = _denominators(p, n)
    phi = (p.h * p.sigma0 / delta).sum(axis=0) / (n - 1)
    psi = (p.col(p.theta * (1.0 - p.gamma)) * p.sigma0 ** 2 / delta).sum(axis=0) / (n - 1)
    return phi, psi


def _investment(p: _Params, n: int) -> np.ndarray:
    phi, psi = _aggregates(p, n)
    bad = np.flatnonzero(np.abs(1.0 + psi) < DENOMINATOR_FLOOR)
    if bad.size:
        raise SingularityError(f"1 + psi^N vanishes on cell {int(bad[0])}")
    delta = _denominators(p, n)
    return p.h / delta - (p.col(p.theta * (1.0 - p.gamma)) * p.sigma0 / delta) * (phi / (1.0 + psi))[None, :]


def compute_aggregates(game: NPlayerGame, t: float, regime: Regime = Regime.PRIMARY) -> Tuple[float, float]:
    """(phi^N, psi^N) at grid time t."""
    p = _check_game(game, regime)
    cell = game.as_population().cell_index(t)
    phi, psi = _aggregates(p, game.n_players)
    return float(phi[cell]), float(psi[cell])


def solve_investment(game: NPlayerGame, regime: Regime = Regime.PRIMARY) -> np.ndarray:
    """Per-player equilibrium investment at the grid nodes."""
    pi = _investment(_check_game(game, regime), game.n_players)
    return np.concatenate([pi, pi[:, -1:]], axis=1)


# ── consumption ──

def _loadings(p: _Params, n: int, pi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Common-noise loading Z^{i0} and opponent loadings Z^{ij} of each player's value."""
    k = p.col(p.theta * (1.0 - p.gamma) / (n - 1))
    total = (pi * p.sigma0).sum(axis=0)[None, :]
    Zi0 = -k * (total - pi * p.sigma0)
    Zij = -k[:, :, None] * (pi * p.sigma)[None, :, :]
    Zij[np.arange(n), np.arange(n), :] = 0.0
    return Zi0, Zij


def solve_consumption_n(game: NPlayerGame, regime: Regime = Regime.PRIMARY) -> NPlayerEquilibrium:
    """Full N-player equilibrium: investment, loadings, Riccati data and consumption."""
    p = _check_game(game, regime)
    n = game.n_players
    pi = _investment(p, n)
    phi, psi = _aggregates(p, n)
    Zi0, Zij = _loadings(p, n, pi)

    # Cross-check against the pointwise maximizer of each player's generator.
    gS = p.col(p.gamma) * p.variance
    pointwise = (p.h + p.sigma0 * Zi0) / gS
    gap = float(np.max(np.abs(pointwise - pi) / (1.0 + np.abs(pi))))
    if gap > 1e-10:
        logger.warning(f"N-player investment and pointwise maximizer differ by {gap:.3e}")

    S = p.variance
    drift = p.r + pi * p.h - 0.5 * S * pi ** 2
    opponents_drift = (drift.sum(axis=0)[None, :] - drift) / (n - 1)
    gamma = p.col(p.gamma)
    A = (
        -p.col(p.theta * (1.0 - p.gamma)) * opponents_drift
        + 0.5 * Zi0 ** 2
        + 0.5 * (Zij ** 2).sum(axis=1)
        + (1.0 - gamma) * p.r
        + ((1.0 - gamma) / (2.0 * gamma)) * (p.h + p.sigma0 * Zi0) ** 2 / S
        - p.col(p.delta * p.theta_tilde)
    )

    scale = 1.0 - p.coupling / (n - 1)
    bad = np.flatnonzero(np.abs(scale) < DENOMINATOR_FLOOR)
    if bad.size:
        raise SingularityError(f"player {int(bad[0])}: 1 - theta(psi-1)/(N-1) vanishes")
    a = p.coupling / scale
    b = ((p.psi - 1.0) / (1.0 - p.gamma)) / scale
    denom = 1.0 + a.sum() / (n - 1)
    if abs(denom) < DENOMINATOR_FLOOR:
        raise SingularityError("1 + sum(a)/(N-1) vanishes")
    B = p.col(b) * A - p.col(a / denom) * ((p.col(b) * A).sum(axis=0) / (n - 1))[None, :]

    m = -p.psi * np.log(p.delta) + (p.psi / p.theta_tilde) * np.log(p.alpha)
    beta = 1.0 / scale
    D = np.exp((a / (n - 1)) * (beta * m).sum() / denom - beta * m)

    curves = tuple(
        riccati_closed_form(GridFunction(game.grid, B[i], "cell"), float(D[i])) for i in range(n)
    )
    c_path = np.array([curve.values for curve in curves])
    c_star = c_path.copy()
    c_star[:, -1] = 1.0
    return NPlayerEquilibrium(
        game=game, pi_cells=pi, c_path=c_path, c_star=c_star, Zi0=Zi0, Zij=Zij,
        a=a, b=b, A=A, B=B, D=D, phiN=phi, psiN=psi, curves=curves,
    )


def solve_nplayer(game: NPlayerGame, regime: Regime = Regime.PRIMARY) -> NPlayerEquilibrium:
    eq = solve_consumption_n(game, regime)
    logger.debug(f"solved {game.n_players}-player game; c(0)={eq.c_star[:, 0].tolist()}")
    return eq


# ── mean-field limit ──

def _fitted_order(ns: Sequence[int], gaps: Sequence[float]) -> float | None:
    """Slope of log(gap) against log(N); None when the gaps vanish."""
    pts = [(np.log(n), np.log(g)) for n, g in zip(ns, gaps) if g > COINCIDENT_GAP]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def mfg_limit_report(
    agent: AgentType,
    ns: Sequence[int],
    grid: Any,
    regime: Regime = Regime.PRIMARY,
) -> ConvergenceTable:
    """Gaps between N i.i.d. copies of `agent` and the single-type mean-field game."""
    ns = [int(n) for n in ns]
    if any(n < 2 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError(f"player counts must be increasing and at least 2, got {ns}")
    mfg = solve_mfg(Population.from_types([agent], grid), regime)
    pi_gaps, c_gaps = [], []
    for n in ns:
        eq = solve_nplayer(NPlayerGame.iid(agent, n, grid), regime)
        pi_gaps.append(float(np.max(np.abs(eq.pi_cells - mfg.pi_cells[0]))))
        c_gaps.append(float(np.max(np.abs(eq.c_path - mfg.c_path[0]))))
    table = ConvergenceTable(
        ns=ns,
        pi_gaps=pi_gaps,
        c_gaps=c_gaps,
        pi_order=_fitted_order(ns, pi_gaps),
        c_order=_fitted_order(ns, c_gaps),
    )
    logger.info(f"mean-field limit: c gaps {c_gaps}, fitted order {table.c_order}")
    return table
