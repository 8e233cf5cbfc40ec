"""Fairness-aware forecasting of linear dynamical systems via noncommutative polynomial optimisation."""

__version__ = "0.1.0"
