"""Hybrid pilot/data GLRT detection for bistatic ISAC."""

__version__ = "0.1.0"
