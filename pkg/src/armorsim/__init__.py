"""Layered armor penetration simulator."""

__version__ = "0.1.0"
