"""Calibrated subactions and quantitative shadowing for hyperbolic maps."""

__version__ = "0.1.0"
