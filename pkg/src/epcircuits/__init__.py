"""Numerical lab for exceptional points of two coupled RLC resonators."""

from .dynamics import circuit_matrix, mechanical_matrix, resonances, simulate, system_matrix
from .eplocator import find_ep, locate_ep
from .model import CircuitParams, OscillatorParams, default_table1, fig2_sweep

__all__ = [
    "CircuitParams",
    "OscillatorParams",
    "circuit_matrix",
    "default_table1",
    "fig2_sweep",
    "find_ep",
    "locate_ep",
    "mechanical_matrix",
    "resonances",
    "simulate",
    "system_matrix",
]
