"""Minimax linear estimation of mixture functionals through moduli of continuity."""

__version__ = "0.1.0"
