"""Lattice Frenkel-Kontorova dynamics in a half-space and its continuum limit."""

__version__ = "0.1.0"
