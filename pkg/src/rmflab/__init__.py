"""Desk-scale laboratory for random multiplicative functions, smooth numbers
and quadratic characters."""

__version__ = "0.1.0"
