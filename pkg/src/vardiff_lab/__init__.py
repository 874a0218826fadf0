"""Numerical verification lab for variational derivatives, eikonals and functional Schrödinger evolution."""

__version__ = "0.1.0"
