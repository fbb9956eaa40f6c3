"""Meshes, fields, inner products and parameter-space helpers shared by both branches."""

from .field import (
    H1,
    H1_SEMI,
    L2,
    Field,
    InnerProduct,
    inner,
    inner_product,
    relative_l2_error,
)
from .mesh import (
    FE_TRI,
    FV_QUAD,
    INLET,
    OUTLET,
    TAGS,
    WALL,
    BackstepGeometry,
    Mesh,
    build_backstep_mesh,
    build_cavity_mesh,
    build_channel_mesh,
)
from .params import ParameterBox, ParameterSample, inlet_vector, maxmin_holdout

__all__ = [
    "H1", "H1_SEMI", "L2", "Field", "InnerProduct", "inner", "inner_product", "relative_l2_error",
    "FE_TRI", "FV_QUAD", "INLET", "OUTLET", "TAGS", "WALL", "BackstepGeometry", "Mesh",
    "build_backstep_mesh", "build_cavity_mesh", "build_channel_mesh",
    "ParameterBox", "ParameterSample", "inlet_vector", "maxmin_holdout",
]
