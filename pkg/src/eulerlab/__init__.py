"""Numerical laboratory for the damped isothermal Euler system with potential."""

from . import linear, parabolic, pressureless, solver, spectral
from .spectral import Grid

__all__ = ["Grid", "linear", "parabolic", "pressureless", "solver", "spectral"]
__version__ = "0.1.0"
