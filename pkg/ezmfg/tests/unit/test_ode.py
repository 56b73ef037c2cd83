"""Quadrature, backward RK4 and the consumption Riccati equation.

The closed-form reciprocal solution must agree with the RK4 oracle; a
mismatch here means the consumption rates written by the solver are wrong.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ezmfg.solver import OdeError, SingularityError
from ezmfg.solver.ode import GridFunction, integrate, riccati_closed_form, riccati_numeric, rk4_backward


def _grid(n: int, T: float = 1.0) -> np.ndarray:
    return np.linspace(0.0, T, n + 1)


# ── GridFunction ──

def test_grid_function_length_checked():
    with pytest.raises(ValueError, match="needs 11 values"):
        GridFunction(_grid(10), np.zeros(10), "node")


def test_grid_function_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        GridFunction(_grid(2), np.array([0.0, np.nan]), "cell")


def test_node_function_interpolates_inside_cell():
    f = GridFunction(_grid(2), np.array([0.0, 1.0, 3.0]))
    assert f.at(0.75, 1) == pytest.approx(2.0)


# ── integrate ──

def test_integrate_zero():
    assert integrate(GridFunction(_grid(10), np.zeros(11)), 0.0, 1.0) == 0.0


def test_integrate_constant_cell_function():
    grid = _grid(8, T=2.0)
    f = GridFunction(grid, np.full(8, 3.0), "cell")
    assert integrate(f, 0.0, 2.0) == pytest.approx(6.0)
    assert integrate(f, 0.5, 1.5) == pytest.approx(3.0)


def test_integrate_linear_function():
    grid = _grid(1000)
    assert integrate(GridFunction(grid, grid.copy()), 0.0, 1.0) == pytest.approx(0.5, abs=1e-6)


def test_integrate_reversed_bounds_flip_sign():
    grid = _grid(10)
    f = GridFunction(grid, grid ** 2)
    assert integrate(f, 1.0, 0.0) == pytest.approx(-integrate(f, 0.0, 1.0))


def test_integrate_off_grid_raises():
    with pytest.raises(ValueError, match="not a grid node"):
        integrate(GridFunction(_grid(10), np.zeros(11)), 0.0, 0.55)


# ── rk4_backward ──

def test_rk4_zero_rhs_keeps_terminal():
    path = rk4_backward(lambda t, y, cell: 0.0 * y, 2.5, _grid(10))
    np.testing.assert_allclose(path.values, 2.5)


def test_rk4_exponential():
    path = rk4_backward(lambda t, y, cell: y, 1.0, _grid(1000), refine=1)
    assert path.values[0] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_rk4_fourth_order():
    def error(n):
        return abs(rk4_backward(lambda t, y, cell: y, 1.0, _grid(n), refine=1).values[0] - math.exp(-1.0))

    ratio = error(10) / error(20)
    assert 14.0 < ratio < 18.0


def test_rk4_uses_cell_index():
    # Piecewise-constant slope: -1 on the first cell, +1 on the second.
    grid = _grid(2)
    path = rk4_backward(lambda t, y, cell: -1.0 if cell == 0 else 1.0, 0.0, grid)
    assert path.values[1] == pytest.approx(-0.5)
    assert path.values[0] == pytest.approx(0.0)


def test_rk4_reports_blow_up_time():
    # y' = y^2 backward from y(1) = -2 blows up at t = 0.5.
    with pytest.raises(OdeError) as exc:
        rk4_backward(lambda t, y, cell: y * y, -2.0, _grid(100))
    assert 0.4 < exc.value.blow_up_time < 0.55


def test_rk4_vector_state():
    path = rk4_backward(lambda t, y, cell: np.array([1.0, 2.0]) * y, np.ones(2), _grid(200))
    np.testing.assert_allclose(path.values[0], [math.exp(-1.0), math.exp(-2.0)], rtol=1e-9)


# ── Riccati ──

def test_riccati_numeric_pure_quadratic():
    B = GridFunction(_grid(100), np.zeros(100), "cell")
    assert riccati_numeric(B, 1.0).values[0] == pytest.approx(0.5, abs=1e-8)


def test_riccati_closed_form_pure_quadratic():
    B = GridFunction(_grid(10), np.zeros(10), "cell")
    curve = riccati_closed_form(B, 1.0)
    assert curve.values[0] == pytest.approx(0.5, abs=1e-14)
    assert curve.at(0.55, 5) == pytest.approx(1.0 / (1.0 + 0.45), rel=1e-14)


def test_riccati_numeric_zero_terminal_stays_zero():
    B = GridFunction(_grid(10), np.full(10, -0.3), "cell")
    np.testing.assert_array_equal(riccati_numeric(B, 0.0).values, 0.0)


def test_riccati_closed_form_rejects_non_positive_terminal():
    with pytest.raises(SingularityError):
        riccati_closed_form(GridFunction(_grid(10), np.zeros(10), "cell"), 0.0)


def test_riccati_closed_form_reports_overflow_as_singularity():
    B = GridFunction(_grid(10), np.full(10, 2.5e5), "cell")
    with pytest.raises(SingularityError, match="floating-point range"):
        riccati_closed_form(B, 1.0)
    with pytest.raises(SingularityError):
        riccati_closed_form(GridFunction(_grid(10), np.zeros(10), "cell"), float("inf"))


def test_riccati_closed_form_large_negative_coefficient():
    # e^{b dt} underflows to 0 and u approaches -1/b
    curve = riccati_closed_form(GridFunction(_grid(10), np.full(10, -1e4), "cell"), 1.0)
    assert curve.values[0] == pytest.approx(1e4, rel=1e-6)


def test_riccati_worked_example_value():
    B = GridFunction(_grid(1000), np.full(1000, -0.1241274), "cell")
    D = 0.1 ** (4.0 / 3.0)
    assert riccati_numeric(B, D).values[0] == pytest.approx(0.050076, abs=2e-6)
    assert riccati_closed_form(B, D).values[0] == pytest.approx(0.050076, abs=2e-6)


def test_cell_integrals_match_quadrature():
    grid = _grid(50)
    B = GridFunction(grid, np.linspace(-0.5, 0.5, 50), "cell")
    curve = riccati_closed_form(B, 0.3)
    fine = np.linspace(grid[10], grid[11], 2001)
    values = [curve.at(t, 10) for t in fine]
    assert curve.cell_integrals()[10] == pytest.approx(np.trapezoid(values, fine), rel=1e-8)
    assert curve.integral_from_node(grid[11], 10) == pytest.approx(curve.cell_integrals()[10], rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    b=st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=4),
    D=st.floats(0.01, 2.0),
    T=st.floats(0.1, 1.0),
)
def test_riccati_numeric_matches_closed_form(b, D, T):
    n_cells = 48
    grid = _grid(n_cells, T)
    # Piecewise-constant B with a few jumps.
    B = GridFunction(grid, np.repeat(b, int(np.ceil(n_cells / len(b))))[:n_cells], "cell")
    closed = riccati_closed_form(B, D).values
    numeric = riccati_numeric(B, D).values
    assert np.max(np.abs(closed - numeric)) <= 1e-6 * max(1.0, np.max(np.abs(closed)))
