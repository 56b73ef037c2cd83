"""Solvers for the mean-field and N-player games.

Error hierarchy shared by the solver modules: each error carries a short
machine-readable code and a human-readable message.
"""
from __future__ import annotations

from typing import Optional


class SolverError(Exception):
    """Base class for numerical failures."""

    error_code = "solver_error"

    def __init__(self, message: str, error_code: Optional[str] = None):
        self.message = message
        if error_code:
            self.error_code = error_code
        super().__init__(message)

    def __str__(self) -> str:
        return f"[{self.error_code}] {self.message}"


class OdeError(SolverError):
    """Integration produced a non-finite state."""

    error_code = "ode_blow_up"

    def __init__(self, message: str, blow_up_time: float):
        self.blow_up_time = blow_up_time
        super().__init__(message)


class SingularityError(SolverError):
    """A denominator of the closed form vanished."""

    error_code = "singular"


class UtilityDomainError(SolverError):
    """Aggregator or utility ODE evaluated outside its domain."""

    error_code = "utility_domain"


class InconsistencyError(SolverError):
    """Two formulas for the same quantity disagree."""

    error_code = "inconsistent"


__all__ = ["InconsistencyError", "OdeError", "SingularityError", "SolverError", "UtilityDomainError"]
