"""Stochastic Galerkin acoustic wave propagation with domain decomposition."""
__version__ = "0.1.0"
