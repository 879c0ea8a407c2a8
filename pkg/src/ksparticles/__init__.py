"""Simulation and verification tools for the planar Keller-Segel particle system."""

__version__ = "0.1.0"
