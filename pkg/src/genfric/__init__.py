"""Genfric: generalized dry-friction damping of linear oscillator systems."""

__version__ = "0.1.0"
