"""N-player equilibrium and its convergence to the mean-field game."""
from __future__ import annotations

import numpy as np
import pytest

from ezmfg.model import ModelValidationError, Population
from ezmfg.solver.mfg import solve_mfg
from ezmfg.solver.nplayer import (
    NPlayerGame,
    compute_aggregates,
    mfg_limit_report,
    solve_investment,
    solve_nplayer,
    validate_game,
)
from ezmfg.solver.ode import GridFunction, riccati_numeric


@pytest.fixture
def grid():
    return np.linspace(0.0, 1.0, 201)


# ── aggregates and investment ──

def test_two_player_aggregates(make_agent, grid):
    game = NPlayerGame.iid(make_agent(), 2, grid)
    phi, psi = compute_aggregates(game, 0.0)
    assert phi == pytest.approx(0.01 / 0.105, rel=1e-12)
    assert psi == pytest.approx(-0.01 / 0.105, rel=1e-12)


def test_two_player_investment(make_agent, grid):
    pi = solve_investment(NPlayerGame.iid(make_agent(), 2, grid))
    assert pi[0, 0] == pytest.approx(0.5263157894736842, rel=1e-12)
    assert pi.shape == (2, 201)


def test_iid_investment_equals_mean_field(make_agent, make_population, grid):
    agent = make_agent()
    mfg = solve_mfg(make_population(agents=[agent]))
    for n in (2, 3, 10):
        eq = solve_nplayer(NPlayerGame.iid(agent, n, grid))
        np.testing.assert_allclose(eq.pi_cells, np.broadcast_to(mfg.pi_cells[0], eq.pi_cells.shape), atol=1e-12)


def test_loadings_structure(make_agent, grid):
    players = [make_agent(), make_agent(gamma=3.0, sigma=0.3), make_agent(theta=0.2, h=0.07)]
    eq = solve_nplayer(NPlayerGame(players, grid))
    assert eq.Zij.shape == (3, 3, 200)
    for i in range(3):
        assert np.all(eq.Zij[i, i] == 0.0)
    assert np.all(np.isfinite(eq.Zi0))


# ── consumption ──

def test_consumption_terminal_and_positivity(make_agent, grid):
    eq = solve_nplayer(NPlayerGame.iid(make_agent(), 4, grid))
    assert np.all(eq.c_star[:, -1] == 1.0)
    assert np.all(eq.c_star > 0.0)


def test_without_competition_players_decouple(make_agent, grid):
    players = [make_agent(theta=0.0), make_agent(theta=0.0, gamma=4.0, h=0.08), make_agent(theta=0.0, psi=3.0)]
    eq = solve_nplayer(NPlayerGame(players, grid))
    for i, agent in enumerate(players):
        alone = solve_mfg(Population.from_types([agent], grid))
        np.testing.assert_allclose(eq.c_star[i], alone.c_star[0], rtol=1e-12)
        np.testing.assert_allclose(eq.pi_cells[i], alone.pi_cells[0], rtol=1e-12)


def test_permuting_players_permutes_outputs(make_agent, grid):
    players = [make_agent(), make_agent(gamma=3.0, sigma=0.3), make_agent(theta=0.2, h=0.07)]
    order = [2, 0, 1]
    eq = solve_nplayer(NPlayerGame(players, grid))
    swapped = solve_nplayer(NPlayerGame([players[i] for i in order], grid))
    np.testing.assert_allclose(swapped.pi_cells, eq.pi_cells[order], rtol=1e-12)
    np.testing.assert_allclose(swapped.c_star, eq.c_star[order], rtol=1e-12)


def test_each_player_solves_its_own_riccati_equation(make_agent, grid):
    from ezmfg.core.pipeline import riccati_residual

    players = [
        make_agent(),
        make_agent(gamma=3.0, psi=1.5, sigma=0.3, delta=0.05, alpha=2.0),
        make_agent(theta=0.2, h=0.07, sigma0=0.15),
    ]
    eq = solve_nplayer(NPlayerGame(players, grid))
    assert len(set(np.round(eq.D, 12))) == 3
    for i in range(len(players)):
        assert riccati_residual(eq.c_path[i], eq.B[i], grid) <= 1e-6
        numeric = riccati_numeric(GridFunction(grid, eq.B[i], "cell"), float(eq.D[i])).values
        assert np.max(np.abs(numeric - eq.c_path[i])) <= 1e-6


# ── validation ──

def test_single_player_rejected(make_agent, grid):
    result = validate_game(NPlayerGame.iid(make_agent(), 1, grid))
    assert not result.ok
    assert "at least 2 players" in result.violations[0]


def test_invalid_player_rejected(make_agent, grid):
    game = NPlayerGame([make_agent(), make_agent(psi=1.0)], grid)
    with pytest.raises(ModelValidationError, match=r"players\[1\]: psi must exceed 1"):
        solve_nplayer(game)


def test_denominator_guard_is_scale_free(make_agent, grid):
    game = NPlayerGame.iid(make_agent(sigma=1e-4, sigma0=0.0), 2, grid)
    assert validate_game(game).ok


# ── mean-field limit ──

def test_limit_table_converges(make_agent, grid):
    table = mfg_limit_report(make_agent(), [2, 4, 8, 16, 32], grid)
    assert all(g <= 1e-10 for g in table.pi_gaps)
    assert all(b < a for a, b in zip(table.c_gaps, table.c_gaps[1:]))
    assert table.c_order is not None and table.c_order <= -0.9
    assert [row["N"] for row in table.rows()] == [2, 4, 8, 16, 32]


def test_limit_table_vanishes_without_competition(make_agent, grid):
    table = mfg_limit_report(make_agent(theta=0.0), [2, 4, 8], grid)
    assert all(g <= 1e-12 for g in table.c_gaps)
    assert all(g <= 1e-12 for g in table.pi_gaps)
    assert table.c_order is None


def test_limit_table_rejects_bad_player_counts(make_agent, grid):
    with pytest.raises(ValueError, match="increasing"):
        mfg_limit_report(make_agent(), [4, 2], grid)
    with pytest.raises(ValueError, match="at least 2"):
        mfg_limit_report(make_agent(), [1, 2], grid)
