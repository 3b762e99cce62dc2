"""Sublinear preferential attachment with a growing number of choices:
simulation, closed-form limits and statistical verification."""

__version__ = "0.1.0"
