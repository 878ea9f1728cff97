"""Semiclassical constrained quantum dynamics laboratory."""

__version__ = "0.1.0"
