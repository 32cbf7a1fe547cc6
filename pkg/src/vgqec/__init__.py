"""Variational graphical quantum error-correcting codes: simulation, recovery and training."""

__version__ = "0.1.0"
