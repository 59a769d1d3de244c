"""Numerical laboratory for polynomial energy decay of the damped wave equation."""

__version__ = "0.1.0"
