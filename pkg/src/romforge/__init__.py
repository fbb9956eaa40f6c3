"""Projection-based reduced order models for parameterized steady Navier-Stokes flows."""

__version__ = "0.1.0"
