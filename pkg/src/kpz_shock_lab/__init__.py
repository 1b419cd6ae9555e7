"""Simulation and statistics toolkit for shocks between coupled KPZ/SHE solutions."""

__version__ = "0.1.0"
