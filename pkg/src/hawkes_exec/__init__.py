"""Hawkes order-flow modelling, calibration and optimal execution."""

__version__ = "0.1.0"
