"""Spatial accelerator generation from space-time transformations."""

__version__ = "0.1.0"
