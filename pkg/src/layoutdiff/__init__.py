"""Diffusion models and geometry-aware metrics for multi-component layouts."""

__version__ = "0.1.0"
