from ezmfg.model.types import AgentType, MarketCoefficients, Population, PreferenceParams, Regime
from ezmfg.model.validation import (
    ModelValidationError,
    ValidationResult,
    equilibrium_denominator,
    population_mean,
    validate,
)

__all__ = [
    "AgentType",
    "MarketCoefficients",
    "ModelValidationError",
    "Population",
    "PreferenceParams",
    "Regime",
    "ValidationResult",
    "equilibrium_denominator",
    "population_mean",
    "validate",
]
