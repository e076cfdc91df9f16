"""Numerical laboratory for quasifree states on truncated Fock spaces."""

__version__ = "0.1.0"
