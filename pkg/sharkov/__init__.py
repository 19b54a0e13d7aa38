"""Sharkovskii forcing, hyperreal sequence arithmetic and piecewise-linear interval dynamics."""

__version__ = "0.1.0"
