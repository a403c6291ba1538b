"""Pseudospectral simulator for the 3D convective Brinkman-Forchheimer
equations on the periodic torus, with a regularity-certificate engine."""

__version__ = "0.1.0"
