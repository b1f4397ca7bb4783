"""Utility-based choice models: logit baselines and alternative-specific deep networks."""

__version__ = "0.1.0"
