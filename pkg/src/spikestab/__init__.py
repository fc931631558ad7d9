"""Stability of single-spike bound states of the semiclassical NLS with lattices."""

__version__ = "0.1.0"
