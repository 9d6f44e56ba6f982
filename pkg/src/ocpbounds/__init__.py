"""Guaranteed cost and error bounds for elliptic optimal control problems."""

__version__ = "0.1.0"
