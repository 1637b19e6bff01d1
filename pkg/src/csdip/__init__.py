"""Compressed sensing with untrained generator networks."""

__version__ = "0.1.0"
