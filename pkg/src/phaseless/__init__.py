"""Phaseless auxiliary-field quantum Monte Carlo with exact-diagonalization checks."""

__version__ = "0.1.0"
