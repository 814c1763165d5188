"""Numerical laboratory for the 2D lattice free field on a disordered substrate."""

__version__ = "0.1.0"
