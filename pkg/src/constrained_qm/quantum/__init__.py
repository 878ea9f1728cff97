"""Grid quantum dynamics and semiclassical approximants."""

from .approximant import (
    CurveFrame,
    CutFunction,
    FixedProfile,
    FlatFrame,
    HarmonicProfile,
    SemiclassicalData,
    approximant_su,
    assemble,
    assemble_curve,
    assemble_flat,
    default_cut,
    residual_at,
    residual_norm,
)
from .grid import Grid2D, GridState, L2Error, l2_error, observables, x_marginal
from .propagate import boundary_fraction, split_step_propagate

__all__ = [
    "CurveFrame",
    "CutFunction",
    "FixedProfile",
    "FlatFrame",
    "Grid2D",
    "GridState",
    "HarmonicProfile",
    "L2Error",
    "SemiclassicalData",
    "approximant_su",
    "assemble",
    "assemble_curve",
    "assemble_flat",
    "boundary_fraction",
    "default_cut",
    "l2_error",
    "observables",
    "residual_at",
    "residual_norm",
    "split_step_propagate",
    "x_marginal",
]
