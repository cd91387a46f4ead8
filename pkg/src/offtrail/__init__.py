"""Traversability-aware topological mapping and frontier exploration in simulation."""

__version__ = "0.1.0"
