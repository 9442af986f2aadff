"""Numerical laboratory for robust Gaussian noise stability on interval unions."""

__version__ = "0.1.0"
