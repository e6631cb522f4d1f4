"""Volume-preserving ball parameterization of tetrahedral meshes."""

from . import errors
from ._backend import BACKEND
from .boundary_init import init_boundary_sphere
from .energy import build_laplacian, image_volume, iso_energy, stretch_energy
from .mesh import (
    TetMesh,
    generate_mesh,
    parse_mesh,
    read_mesh,
    signed_volume,
    vertex_volume,
    vertex_volumes,
    write_mesh,
)
from .metrics import DistortionSummary, evaluate, folding_count, local_distortion, summarize
from .pose import AstTransform, ast_normalize
from .registration import (
    RegistrationMap,
    deformation_measure,
    homotopy,
    locate_point,
    optimal_rotation,
    register,
)
from .solver import (
    SolverConfig,
    SolverReport,
    cg_minimize,
    factor_preconditioner,
    normalized_mesh,
    parameterize,
    vsem_fixed_point,
)
from .spherical import SphericalBoundary, from_spherical, grad_iso_energy, to_spherical

__version__ = "0.1.0"

__all__ = [
    "AstTransform", "BACKEND", "DistortionSummary", "RegistrationMap", "SolverConfig",
    "SolverReport", "SphericalBoundary", "TetMesh", "ast_normalize", "build_laplacian",
    "cg_minimize", "deformation_measure", "errors", "evaluate", "factor_preconditioner", "folding_count",
    "from_spherical", "generate_mesh", "grad_iso_energy", "homotopy", "image_volume",
    "init_boundary_sphere", "iso_energy", "local_distortion", "locate_point",
    "normalized_mesh", "optimal_rotation", "parameterize", "parse_mesh", "read_mesh", "register",
    "signed_volume", "stretch_energy", "summarize", "to_spherical", "vertex_volume",
    "vertex_volumes", "vsem_fixed_point", "write_mesh",
]
