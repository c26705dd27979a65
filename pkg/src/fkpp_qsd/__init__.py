"""Quasi-stationary analytics and desk-scale Monte Carlo for a noisy
gene-frequency field on the circle and its branching-coalescing particle dual."""

__version__ = "0.1.0"
