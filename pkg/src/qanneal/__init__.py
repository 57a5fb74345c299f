"""Numerical laboratory for quantum annealing: dynamics, bounds and Monte Carlo convergence."""

__version__ = "0.1.0"
