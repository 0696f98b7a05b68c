"""Glauber birth-and-death dynamics in the continuum: bounds, hierarchies, kinetic limit and simulation."""

__version__ = "0.1.0"
