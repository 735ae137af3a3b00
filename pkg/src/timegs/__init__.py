"""Forecasting by rendering period-folded 2D Gaussian kernels onto the horizon."""

__version__ = "0.1.0"
