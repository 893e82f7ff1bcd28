"""Projected stochastic gradient for PDE-constrained control under uncertainty."""

__version__ = '1.0.0'
