"""Extremum-seeking hover control for flapping-wing insects."""

__version__ = "0.1.0"
