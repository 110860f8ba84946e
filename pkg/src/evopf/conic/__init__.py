"""Continuous conic programs and an interior-point solver for them."""

from .cones import ConeLayout, ConeSlice, NTScaling
from .ipm import ResidualReport, SolveOutcome, SolverSettings, Status, residuals, solve
from .program import ConicProgram, StandardForm

__all__ = [
    "ConeLayout",
    "ConeSlice",
    "ConicProgram",
    "NTScaling",
    "ResidualReport",
    "SolveOutcome",
    "SolverSettings",
    "StandardForm",
    "Status",
    "residuals",
    "solve",
]
