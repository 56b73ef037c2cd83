"""Epstein-Zin mean-field portfolio games.

Closed-form equilibria for the mean-field and N-player versions of the
relative-consumption Merton problem, a utility evaluator for arbitrary
proportional strategies and a Monte Carlo verification harness.
"""

__version__ = "0.3.0"
