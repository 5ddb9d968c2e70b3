"""Coupling, transport and Harnack-type estimates, checked numerically."""

__version__ = "0.1.0"
