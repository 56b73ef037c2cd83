"""Admissibility checks and population averages.

Every violation must be reported with the offending field, and population
means must be linear in the extracted quantity and blind to type order.
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ezmfg.model import (
    ModelValidationError,
    Population,
    PreferenceParams,
    Regime,
    population_mean,
    validate,
)


# ── preferences ──

def test_theta_tilde_worked_example():
    prefs = PreferenceParams(delta=0.1, gamma=2.0, psi=2.0, theta=0.5, alpha=1.0)
    assert prefs.theta_tilde == pytest.approx(-2.0)


def test_theta_tilde_power_utility_is_one():
    prefs = PreferenceParams(delta=0.1, gamma=0.5, psi=2.0, theta=0.0, alpha=1.0)
    assert prefs.theta_tilde == 1.0


def test_prefs_dict_round_trip():
    prefs = PreferenceParams(delta=0.1, gamma=2.0, psi=2.0, theta=0.5, alpha=1.0)
    assert PreferenceParams.from_dict(prefs.to_dict()) == prefs


# ── validate ──

def test_worked_example_is_valid(worked_population):
    result = validate(worked_population, Regime.PRIMARY)
    assert result.ok, result.violations


def test_psi_one_rejected(make_population):
    result = validate(make_population(psi=1.0), Regime.PRIMARY)
    assert not result.ok
    assert any("psi must exceed 1" in v for v in result.violations)


def test_gamma_one_rejected(make_population):
    result = validate(make_population(gamma=1.0), Regime.PRIMARY)
    assert any("gamma must differ from 1" in v for v in result.violations)


def test_primary_regime_needs_psi_gamma_at_least_one(make_population):
    result = validate(make_population(gamma=0.5, psi=1.5), Regime.PRIMARY)
    assert any("psi*gamma >= 1" in v for v in result.violations)


def test_alternative_regime_bounds(make_population):
    assert validate(make_population(gamma=0.5, psi=2.0, theta=0.0), Regime.ALTERNATIVE).ok
    result = validate(make_population(gamma=2.0, psi=2.0), Regime.ALTERNATIVE)
    assert any("psi*gamma <= 1" in v for v in result.violations)
    assert any("gamma < 1" in v for v in result.violations)


def test_weights_must_sum_to_one(make_agent):
    agents = [make_agent(), make_agent()]
    pop = Population.from_types(agents, np.linspace(0, 1, 201), [0.3, 0.6])
    result = validate(pop)
    assert any("sum to 1" in v for v in result.violations)


def test_negative_weight_rejected(make_agent):
    pop = Population.from_types([make_agent(), make_agent()], np.linspace(0, 1, 201), [1.5, -0.5])
    assert any("weights must be positive" in v for v in validate(pop).violations)


def test_zero_total_volatility_rejected(make_population):
    result = validate(make_population(sigma=0.0, sigma0=0.0))
    assert any("sigma^2 + sigma0^2" in v for v in result.violations)


def test_market_length_mismatch_rejected(make_agent):
    pop = Population.from_types([make_agent(n_cells=10)], np.linspace(0, 1, 21))
    assert any("expected 20 cells" in v for v in validate(pop).violations)


def test_non_increasing_grid_rejected(make_agent):
    grid = np.array([0.0, 0.5, 0.5, 1.0])
    pop = Population.from_types([make_agent(n_cells=3)], grid)
    assert any("strictly increasing" in v for v in validate(pop).violations)


def test_singular_denominator_rejected(make_population):
    # 1 + theta(1-gamma) sigma0^2/(gamma S) = 1 - 2*9*1/(10*1) < 0
    result = validate(make_population(gamma=10.0, psi=1.5, theta=2.0, sigma=0.0, sigma0=1.0))
    assert any("singular equilibrium denominator" in v for v in result.violations)


def test_raise_for_violations_carries_messages(make_population):
    result = validate(make_population(psi=1.0, delta=-1.0))
    with pytest.raises(ModelValidationError) as exc:
        result.raise_for_violations()
    assert len(exc.value.violations) >= 2
    assert "delta must be positive" in str(exc.value)


# ── population_mean ──

def test_population_mean_constant_extractor(two_type_population):
    assert population_mean(two_type_population, lambda a, cell: 3.0, 0.5) == pytest.approx(3.0)


def test_population_mean_single_type_identity(make_population):
    pop = make_population()
    value = population_mean(pop, lambda a, cell: a.market.h[cell], 0.0)
    assert value == pytest.approx(0.05)


def test_population_mean_weights(two_type_population):
    value = population_mean(two_type_population, lambda a, cell: a.prefs.gamma, 1.0)
    assert value == pytest.approx(0.3 * 2.0 + 0.7 * 3.0)


def test_population_mean_off_grid_raises(make_population):
    with pytest.raises(ValueError, match="not a grid node"):
        population_mean(make_population(n_cells=10), lambda a, cell: 1.0, 0.123)


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.floats(-10, 10), min_size=2, max_size=5),
    scale=st.floats(-3, 3),
    shift=st.floats(-3, 3),
)
def test_population_mean_linear_and_permutation_invariant(values, scale, shift):
    from ezmfg.model import AgentType, MarketCoefficients

    agents = [
        AgentType(
            prefs=PreferenceParams(delta=0.1, gamma=2.0, psi=2.0, theta=0.0, alpha=1.0),
            market=MarketCoefficients.constant(4, 0.0, 0.0, 0.2, 0.0),
            x0=float(i + 1),
        )
        for i in range(len(values))
    ]
    lookup = {a.x0: v for a, v in zip(agents, values)}
    weights = np.full(len(agents), 1.0 / len(agents))
    grid = np.linspace(0, 1, 5)
    pop = Population.from_types(agents, grid, weights)
    shuffled = Population.from_types(agents[::-1], grid, weights[::-1])

    base = population_mean(pop, lambda a, cell: lookup[a.x0], 0.25)
    affine = population_mean(pop, lambda a, cell: scale * lookup[a.x0] + shift, 0.25)
    assert affine == pytest.approx(scale * base + shift, abs=1e-9)
    assert population_mean(shuffled, lambda a, cell: lookup[a.x0], 0.25) == pytest.approx(base, abs=1e-12)
