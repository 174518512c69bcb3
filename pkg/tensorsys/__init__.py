"""Symbolic engine for typed abstract tensor systems."""

__version__ = "0.1.0"
