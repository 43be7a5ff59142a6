"""
Periodic unit-cell problems and the homogenized diffusion tensor.

For a perforated cell Y with ECM part Y_e the correctors w^j are periodic,
zero-mean solutions of

    div( D (grad w^j + e_j) ) = 0  in Y_e,   D (grad w^j + e_j) . n = 0  on holes,

and the effective tensor is ``D_ij = D / |V| * int_{Y_e} (delta_ij + d_i w^j)``.
``V`` is the whole cell by default (``normalization="cell"``) or the ECM
part (``normalization="ecm"``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import DofMap, assemble_gradient_load, assemble_stiffness, lumped_mass
from .mesh import Mesh, periodic_pairs
from .sparse import SolveReport, cg_solve


@dataclass
class CellSolution:
    mesh: Mesh
    dofmap: DofMap
    correctors: list  # one nodal field per axis, indexed by dof
    diffusivity: float
    reports: list = field(default_factory=list)

    def corrector_at_vertices(self, axis: int) -> np.ndarray:
        return self.dofmap.to_vertices(self.correctors[axis])


@dataclass
class EffectiveTensor:
    matrix: np.ndarray
    volume_fraction: float
    diffusivity: float
    iterations: tuple = ()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def mean_diagonal(self) -> float:
        return float(np.trace(self.matrix) / self.dim)

    def ratio(self) -> np.ndarray:
        """Tensor in units of the base diffusivity."""
        return self.matrix / self.diffusivity


def cell_dofmap(mesh: Mesh) -> DofMap:
    return DofMap.periodic(mesh, periodic_pairs(mesh))


def _solve_axis(mesh: Mesh, dofmap: DofMap, K, axis: int, diffusivity: float, tol: float):
    e = np.zeros(mesh.dim)
    e[axis] = 1.0
    b = -diffusivity * assemble_gradient_load(mesh, dofmap, e)
    # without holes the load cancels exactly; drop what is left of round-off
    size = np.bincount(dofmap.element_dofs.ravel(), minlength=dofmap.n_dofs,
                       weights=(mesh.measures[:, None] * np.abs(mesh.gradients[:, :, axis])).ravel())
    if np.linalg.norm(b) <= 1e-12 * diffusivity * np.linalg.norm(size):
        b[:] = 0.0
    w, report = cg_solve(K, b, tol=tol, mean_free=True)
    # zero integral over Y_e (the solver only makes the nodal mean vanish)
    lm = lumped_mass(mesh, dofmap)
    w -= (lm @ w) / lm.sum()
    return w, report


def solve_cell_problem(mesh: Mesh, axis: int, diffusivity: float = 1.0, dofmap: DofMap | None = None,
                       tol: float = 1e-10) -> np.ndarray:
    """Periodic corrector ``w^axis`` (nodal values per dof)."""
    return solve_cell_problems(mesh, diffusivity, dofmap, tol, axes=(axis,)).correctors[0]


def solve_cell_problems(mesh: Mesh, diffusivity: float = 1.0, dofmap: DofMap | None = None,
                        tol: float = 1e-10, axes=None) -> CellSolution:
    if diffusivity <= 0:
        raise ValueError("base diffusivity must be positive")
    dofmap = cell_dofmap(mesh) if dofmap is None else dofmap
    K = assemble_stiffness(mesh, dofmap, diffusivity)
    axes = range(mesh.dim) if axes is None else axes
    ws, reports = [], []
    for j in axes:
        w, rep = _solve_axis(mesh, dofmap, K, j, diffusivity, tol)
        ws.append(w)
        reports.append(rep)
    return CellSolution(mesh, dofmap, ws, diffusivity, reports)


def tensor_from_correctors(sol: CellSolution, measure: float) -> np.ndarray:
    mesh, d = sol.mesh, sol.mesh.dim
    vol = mesh.measures
    D = np.empty((d, d))
    for j, w in enumerate(sol.correctors):
        grad = np.einsum("eia,ei->ea", mesh.gradients, w[sol.dofmap.element_dofs])  # (ne, d)
        D[:, j] = vol @ grad
    D += np.eye(d) * vol.sum()
    return sol.diffusivity * D / measure


def effective_tensor(mesh: Mesh, diffusivity: float = 1.0, normalization: str = "cell",
                     cell_measure: float | None = None, tol: float = 1e-10) -> EffectiveTensor:
    """Homogenized diffusion tensor of a periodic perforated cell.

    Parameters
    ----------
    normalization : {"cell", "ecm"}
        Divide the integral by the cell measure |Y| (default) or by the
        meshed ECM measure |Y_e|. The two differ by the factor ``phi``.
    cell_measure : float, optional
        |Y|; defaults to the measure of the mesh bounding box.
    """
    cell = mesh.box_measure if cell_measure is None else float(cell_measure)
    ecm = mesh.total_measure()
    if normalization == "cell":
        measure = cell
    elif normalization == "ecm":
        measure = ecm
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    sol = solve_cell_problems(mesh, diffusivity, tol=tol)
    D = tensor_from_correctors(sol, measure)
    D = 0.5 * (D + D.T)  # symmetric up to solver tolerance already
    return EffectiveTensor(D, ecm / cell, diffusivity, tuple(r.iterations for r in sol.reports))


def maxwell_garnett(theta: float, d: int) -> float:
    """Dilute-limit effective diffusivity ratio for insulating inclusions.

    (1 - theta)/(1 + theta) for discs, 2(1 - theta)/(2 + theta) for spheres.
    """
    if not 0 <= theta < 1:
        raise ValueError("inclusion fraction must lie in [0, 1)")
    if d == 2:
        return (1 - theta) / (1 + theta)
    if d == 3:
        return 2 * (1 - theta) / (2 + theta)
    raise ValueError("dimension must be 2 or 3")
