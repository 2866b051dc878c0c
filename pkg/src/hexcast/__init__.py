"""Hexagonal-grid ride-hailing demand forecasting and granularity sweeps."""

__version__ = "0.1.0"
