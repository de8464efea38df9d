"""Driving commentary generation: a spatial-attention controller feeding a
temporal-attention caption generator with part-of-speech prediction and
special-token penalties, plus the synthetic data, metrics and experiment
harness around it."""

__version__ = "0.1.0"
