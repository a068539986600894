"""Numerical laboratory for heat-flow scale ladders and related estimates."""

__version__ = "0.1.0"
