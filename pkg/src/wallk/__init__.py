"""Thermal conductivity retrieval for single-leaf walls from surface thermographs."""

__version__ = "0.1.0"
