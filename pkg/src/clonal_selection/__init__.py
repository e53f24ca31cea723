"""Simulation and checks for a stage-structured model of clonal selection.

Cells are indexed by maturation stage i = 1..M and by a continuous clone
index x in [0, 1]. A shared feedback signal, depleted by mature cells,
controls self-renewal in every stage and every clone.
"""
from .model import (
    DensityTotals,
    Grid,
    ModelParams,
    State,
    density_totals,
    differentiation_outflux,
    feedback_signal,
    net_growth,
    rhs,
    total_density,
    validate_assumptions,
)
from .solver import SolverConfig, Trajectory, euler_step, simulate
from .calibration import PRESET_NAMES, build_preset

__all__ = [
    "DensityTotals",
    "Grid",
    "ModelParams",
    "State",
    "density_totals",
    "differentiation_outflux",
    "feedback_signal",
    "net_growth",
    "rhs",
    "total_density",
    "validate_assumptions",
    "SolverConfig",
    "Trajectory",
    "euler_step",
    "simulate",
    "PRESET_NAMES",
    "build_preset",
]
