"""Run configuration: JSON schema, broadcasting and conversion to model objects."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError

from ezmfg.core.config import app_config
from ezmfg.model import AgentType, MarketCoefficients, Population, PreferenceParams, Regime
from ezmfg.solver.nplayer import NPlayerGame
from ezmfg.solver.simulate import SimConfig

MARKET_FIELDS = ("r", "h", "sigma", "sigma0")


class ConfigError(ValueError):
    """Config parse or schema error located by a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        self.message = message
        super().__init__(f"{self.pointer}: {message}")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PrefsSpec(_Strict):
    delta: float
    gamma: float
    psi: float
    theta: float
    alpha: float


class MarketSpec(_Strict):
    r: Union[float, List[float]]
    h: Union[float, List[float]]
    sigma: Union[float, List[float]]
    sigma0: Union[float, List[float]]


class TypeSpec(_Strict):
    weight: float = 1.0
    x0: float = 1.0
    prefs: PrefsSpec
    market: MarketSpec


class GridSpec(_Strict):
    n_cells: PositiveInt


def _sim_default(key: str):
    return lambda: app_config.sim_defaults[key]


class SimSpec(_Strict):
    n_paths: PositiveInt = Field(default_factory=_sim_default('n_paths'))
    seed: NonNegativeInt = Field(default_factory=_sim_default('seed'))
    antithetic: bool = False
    dt_report: Optional[PositiveFloat] = None
    block_size: PositiveInt = Field(default_factory=_sim_default('block_size'))


class LimitSpec(_Strict):
    ns: List[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32])
    type_index: NonNegativeInt = 0


class VerifySpec(_Strict):
    eps: List[float] = Field(default_factory=lambda: [0.01, -0.01, 0.05, -0.05, 0.1, -0.1])


class RunConfig(_Strict):
    regime: Regime = Regime.PRIMARY
    T: PositiveFloat
    grid: GridSpec
    population: List[TypeSpec] = Field(min_length=1)
    players: Optional[List[TypeSpec]] = None
    sim: SimSpec = Field(default_factory=SimSpec)
    nplayer_limit: LimitSpec = Field(default_factory=LimitSpec)
    verify: VerifySpec = Field(default_factory=VerifySpec)
    out: Optional[str] = None

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_cells + 1)

    def normalized(self) -> "RunConfig":
        """Copy with every market coefficient broadcast to a per-cell list."""
        check_broadcast(self)
        data = self.model_dump(mode="json")
        for section in ("population", "players"):
            for entry in data.get(section) or []:
                for name in MARKET_FIELDS:
                    entry["market"][name] = _broadcast(entry["market"][name], self.n_cells)
        return RunConfig.model_validate(data)

    def to_dict(self) -> Dict[str, Any]:
        return self.normalized().model_dump(mode="json")

    def model_fingerprint(self) -> Dict[str, Any]:
        """The parts of the config that determine the solved equilibrium."""
        data = self.to_dict()
        return {k: data[k] for k in ("regime", "T", "grid", "population", "players")}


def _broadcast(value: Union[float, List[float]], n_cells: int) -> List[float]:
    if isinstance(value, list):
        return [float(v) for v in value]
    return [float(value)] * n_cells


def check_broadcast(cfg: RunConfig) -> None:
    for section in ("population", "players"):
        for i, entry in enumerate(getattr(cfg, section) or []):
            for name in MARKET_FIELDS:
                value = getattr(entry.market, name)
                if isinstance(value, list) and len(value) != cfg.n_cells:
                    raise ConfigError(
                        f"/{section}/{i}/market/{name}",
                        f"expected {cfg.n_cells} per-cell values, got {len(value)}",
                    )


def _pointer(loc) -> str:
    return "/" + "/".join(str(part) for part in loc)


def parse_config(data: Any) -> RunConfig:
    """Validate an already-decoded JSON document."""
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(_pointer(first.get("loc", ())), first.get("msg", "invalid value")) from exc
    check_broadcast(cfg)
    return cfg


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    return parse_config(data)


def with_overrides(
    cfg: RunConfig,
    dt: Optional[float] = None,
    n_paths: Optional[int] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """Apply command-line overrides and re-validate."""
    data = cfg.model_dump(mode="json")
    if dt is not None:
        if not dt > 0:
            raise ConfigError("/grid/n_cells", f"--dt must be positive, got {dt}")
        n_cells = int(round(cfg.T / dt))
        if n_cells < 1 or abs(n_cells * dt - cfg.T) > 1e-9 * cfg.T:
            raise ConfigError("/grid/n_cells", f"--dt={dt} does not divide T={cfg.T}")
        data["grid"]["n_cells"] = n_cells
    if n_paths is not None:
        data["sim"]["n_paths"] = n_paths
    if seed is not None:
        data["sim"]["seed"] = seed
    return parse_config(data)


# ── conversion to model objects ──

def _agent(entry: TypeSpec, n_cells: int) -> AgentType:
    market = MarketCoefficients(**{name: _broadcast(getattr(entry.market, name), n_cells) for name in MARKET_FIELDS})
    return AgentType(prefs=PreferenceParams(**entry.prefs.model_dump()), market=market, x0=entry.x0)


def build_population(cfg: RunConfig) -> Population:
    agents = [_agent(entry, cfg.n_cells) for entry in cfg.population]
    return Population.from_types(agents, cfg.time_grid(), [entry.weight for entry in cfg.population])


def build_game(cfg: RunConfig) -> NPlayerGame:
    """Explicit `players` when given, otherwise one player per population type.

    A single-type population without `players` becomes a two-player i.i.d. game.
    """
    entries = cfg.players if cfg.players is not None else cfg.population
    if cfg.players is None and len(entries) == 1:
        entries = entries * 2
    return NPlayerGame(players=tuple(_agent(entry, cfg.n_cells) for entry in entries), grid=cfg.time_grid())


def build_sim(cfg: RunConfig) -> SimConfig:
    s = cfg.sim
    try:
        return SimConfig(
            n_paths=s.n_paths, seed=s.seed, dt_report=s.dt_report, antithetic=s.antithetic, block_size=s.block_size,
        )
    except ValueError as exc:
        raise ConfigError("/sim", str(exc))
