"""Demand-driven service lifecycle simulator for an edge/fog/cloud continuum."""

__version__ = "0.1.0"
