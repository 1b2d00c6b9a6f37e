"""Conic optimization: program container, interior-point solver, SDP helpers."""

from .builder import ProgramBuilder, quad_over_linear_block, rsoc_contains
from .cones import ProductCone, smat, svec, svec_size
from .program import Cone, ConeProgram, ConeSolution, Status
from .sdp import (
    FeasibilityResult,
    HermitianParam,
    MatrixConstraint,
    OptimizationResult,
    sdp_feasibility,
    sdp_minimize,
)
from .solver import solve

__all__ = [
    "Cone",
    "ConeProgram",
    "ConeSolution",
    "FeasibilityResult",
    "HermitianParam",
    "MatrixConstraint",
    "OptimizationResult",
    "ProductCone",
    "ProgramBuilder",
    "Status",
    "quad_over_linear_block",
    "rsoc_contains",
    "sdp_feasibility",
    "sdp_minimize",
    "smat",
    "solve",
    "svec",
    "svec_size",
]
