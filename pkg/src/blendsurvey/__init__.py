"""Blending probability and convenience samples with propensity-score and calibration weights."""

__version__ = "0.1.0"
