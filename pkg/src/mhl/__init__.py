"""Harmonic maps into metric targets: flows, grid energies, verification."""

__version__ = "0.1.0"
