"""Simulation and verification tools for the multitype contact process."""

__version__ = "0.1.0"
