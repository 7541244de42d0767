"""Stochastic subgradient methods for weakly convex problems with Markovian data."""

__version__ = "0.1.0"
