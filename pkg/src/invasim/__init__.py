"""
invasim: homogenized enzyme diffusivities on perforated cells and a
finite-element simulator for MMP-mediated cancer invasion.
"""
__version__ = "0.1.0"

from .diffusivity import ScalarCubicModel, TensorInterpolant, fit_scalar_cubic, log_euclidean_interp
from .homog import effective_tensor, maxwell_garnett, solve_cell_problem
from .invasion import FieldState, InvasionSolver, ModelParams, initial_preset, invaded_area_fraction
from .mesh import Mesh, PerforationSpec, generate_perforated_cell, generate_rectangle, import_mesh
from .sparse import SparseMatrix, cg_solve

__all__ = [
    "Mesh", "PerforationSpec", "generate_rectangle", "generate_perforated_cell", "import_mesh",
    "SparseMatrix", "cg_solve", "solve_cell_problem", "effective_tensor", "maxwell_garnett",
    "ScalarCubicModel", "TensorInterpolant", "fit_scalar_cubic", "log_euclidean_interp",
    "ModelParams", "FieldState", "InvasionSolver", "initial_preset", "invaded_area_fraction",
]
