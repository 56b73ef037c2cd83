"""Backward ODE integration on a time grid and the consumption Riccati equation.

Two representations of time-dependent data live on a grid t_0 < ... < t_M:
node values (one per grid point, linear in between) and cell values
(piecewise constant, one per [t_k, t_{k+1})).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from ezmfg.common.logger import setup_logger
from ezmfg.solver import OdeError, SingularityError

logger = setup_logger('solver')

DEFAULT_REFINE = 10


def node_index(grid: np.ndarray, t: float) -> int:
    """Index of grid node t; ValueError when t is not a node."""
    idx = int(np.searchsorted(grid, t))
    tol = 1e-12 * max(1.0, abs(float(grid[-1])))
    for cand in (idx - 1, idx):
        if 0 <= cand < len(grid) and abs(grid[cand] - t) <= tol:
            return cand
    raise ValueError(f"time {t!r} is not a grid node")


@dataclass(frozen=True)
class GridFunction:
    grid: np.ndarray
    values: np.ndarray
    kind: Literal["node", "cell"] = "node"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        expected = len(grid) if self.kind == "node" else len(grid) - 1
        if self.kind not in ("node", "cell"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if values.shape[0] != expected:
            raise ValueError(f"{self.kind} function needs {expected} values, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function contains non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def at(self, t: float, cell: int) -> float:
        """Value at time t inside cell `cell` (t may be either endpoint)."""
        if self.kind == "cell":
            return float(self.values[cell])
        t0, t1 = self.grid[cell], self.grid[cell + 1]
        w = (t - t0) / (t1 - t0)
        return float((1.0 - w) * self.values[cell] + w * self.values[cell + 1])


def integrate(f: GridFunction, a: float, b: float) -> float:
    """Integral of f over [a, b] for grid nodes a, b.

    Cell functions are integrated exactly; node functions with the
    trapezoid rule. Reversed bounds flip the sign.
    """
    if a > b:
        return -integrate(f, b, a)
    i, j = node_index(f.grid, a), node_index(f.grid, b)
    if i == j:
        return 0.0
    if f.kind == "cell":
        return float(np.dot(f.values[i:j], np.diff(f.grid[i:j + 1])))
    return float(np.trapezoid(f.values[i:j + 1], f.grid[i:j + 1]))


def rk4_backward(
    rhs: Callable[[float, np.ndarray, int], np.ndarray],
    terminal,
    grid: np.ndarray,
    refine: int = DEFAULT_REFINE,
) -> GridFunction:
    """Classical RK4 from T down to 0.

    `rhs(t, y, cell)` is evaluated with the index of the cell being crossed,
    so piecewise-constant coefficients never straddle a jump. Each cell is
    split into `refine` equal sub-steps; node values are returned.
    """
    grid = np.asarray(grid, dtype=float)
    if refine < 1:
        raise ValueError("refine must be at least 1")
    y = np.asarray(terminal, dtype=float)
    out = np.empty((len(grid),) + y.shape)
    out[-1] = y
    for k in range(len(grid) - 2, -1, -1):
        t_end = grid[k + 1]
        h = (grid[k] - t_end) / refine
        for s in range(refine):
            t = t_end + s * h
            k1 = rhs(t, y, k)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1, k)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2, k)
            k4 = rhs(t + h, y + h * k3, k)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                logger.warning(f"RK4 state became non-finite near t={t + h:.6g}")
                raise OdeError(f"non-finite state near t={t + h:.6g}", blow_up_time=float(t + h))
        out[k] = y
    return GridFunction(grid, out, "node")


def _phi1(x: float) -> float:
    """(e^x - 1)/x, continuous at 0; inf once e^x overflows."""
    if x == 0.0:
        return 1.0
    with np.errstate(over="ignore"):
        return float(np.expm1(x) / x)


def _reciprocal_step(x: float, u_next: float, tau: float) -> float:
    """e^x u_next + tau phi1(x), the reciprocal carried back over tau; inf on overflow."""
    with np.errstate(over="ignore"):
        grown = float(np.exp(x)) * u_next
    return grown + tau * _phi1(x)


@dataclass(frozen=True)
class RiccatiCurve:
    """Exact solution of y' = y^2 + B y, y(T) = D, for piecewise-constant B.

    Stored through the reciprocal u = 1/y, which solves the linear equation
    u' = -1 - B u. On a cell with constant b this gives
    u(t) = e^{b (t_{k+1} - t)} u(t_{k+1}) + (t_{k+1} - t) phi1(b (t_{k+1} - t)),
    i.e. y(t) = D / (e^{int_t^T B} + D int_t^T e^{int_t^s B} ds).
    """
    grid: np.ndarray
    b: np.ndarray
    terminal: float
    u: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """y at the grid nodes; the last entry is the left limit D."""
        return 1.0 / self.u

    def reciprocal_at(self, t: float, cell: int) -> float:
        tau = self.grid[cell + 1] - t
        return _reciprocal_step(self.b[cell] * tau, self.u[cell + 1], tau)

    def at(self, t: float, cell: int) -> float:
        return 1.0 / self.reciprocal_at(t, cell)

    def integral_from_node(self, t: float, cell: int) -> float:
        """Exact integral of y from t_cell to t inside the cell."""
        return math.log(self.u[cell] / self.reciprocal_at(t, cell)) - self.b[cell] * (t - self.grid[cell])

    def cell_integrals(self) -> np.ndarray:
        """Exact integral of y over every cell."""
        return np.log(self.u[:-1] / self.u[1:]) - self.b * np.diff(self.grid)


def riccati_closed_form(B: GridFunction, D: float) -> RiccatiCurve:
    """Closed-form reciprocal solution for piecewise-constant B."""
    if B.kind != "cell":
        raise ValueError("closed-form Riccati needs piecewise-constant (cell) coefficients")
    if not (D > 0.0 and math.isfinite(D) and math.isfinite(1.0 / D)):
        raise SingularityError(f"terminal value must be positive and representable, got {D!r}")
    grid, b = B.grid, np.array(B.values, dtype=float)
    u = np.empty(len(grid))
    u[-1] = 1.0 / D
    dt = np.diff(grid)
    for k in range(len(dt) - 1, -1, -1):
        u[k] = _reciprocal_step(b[k] * dt[k], u[k + 1], dt[k])
        if not (np.isfinite(u[k]) and u[k] > 0.0):
            logger.warning(f"closed-form Riccati reciprocal overflowed at t={grid[k]:.6g}")
            raise SingularityError(
                f"consumption rate underflows near t={grid[k]:.6g}: "
                f"int_t^T B exceeds the floating-point range"
            )
    b.setflags(write=False)
    u.setflags(write=False)
    return RiccatiCurve(grid=grid, b=b, terminal=float(D), u=u)


def riccati_numeric(B: GridFunction, D: float, refine: int = DEFAULT_REFINE) -> GridFunction:
    """RK4 oracle for y' = y^2 + B y, y(T) = D."""
    def rhs(t, y, cell):
        return y * y + B.at(t, cell) * y
    return rk4_backward(rhs, D, B.grid, refine=refine)
