"""Numerical toolkit for Anosov subgroups of PSL(d, R) and PSL(d, C)."""

__version__ = "0.1.0"
