"""Finite-volume full-order model for the backward-facing step."""

from .operators import FVOperators, default_tau, xfield, xvec
from .solver import (
    FVConfig,
    FVState,
    FVSystem,
    eddy_viscosity,
    homogenize,
    lifting_coefficients,
    lifting_fv,
    mixing_length,
    reattachment_index,
    solve_fom_fv,
    solve_linear_stokes,
)

__all__ = [
    "FVOperators", "default_tau", "xfield", "xvec", "FVConfig", "FVState", "FVSystem", "eddy_viscosity",
    "homogenize", "lifting_coefficients", "lifting_fv", "mixing_length", "reattachment_index", "solve_fom_fv",
    "solve_linear_stokes",
]
