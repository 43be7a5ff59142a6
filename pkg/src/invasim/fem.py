"""
P1 finite-element assembly on triangle/tetrahedron meshes.

Nodal fields are plain arrays indexed by degree of freedom. A :class:`DofMap`
maps mesh vertices to dofs, identifying periodic vertex pairs when built from
a :class:`~invasim.mesh.PeriodicPairing`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .mesh import Mesh, PeriodicPairing
from .sparse import Pattern, SparseMatrix


@dataclass(frozen=True, eq=False)
class DofMap:
    vertex_to_dof: np.ndarray
    n_dofs: int
    element_dofs: np.ndarray  # (ne, d+1)

    @classmethod
    def identity(cls, mesh: Mesh) -> "DofMap":
        return cls(np.arange(mesh.n_vertices), mesh.n_vertices, mesh.elements)

    @classmethod
    def periodic(cls, mesh: Mesh, pairing: PeriodicPairing) -> "DofMap":
        rep = pairing.representative
        masters, v2d = np.unique(rep, return_inverse=True)
        v2d = v2d.ravel()
        return cls(v2d, len(masters), v2d[mesh.elements])

    @cached_property
    def pattern(self) -> Pattern:
        e = self.element_dofs
        k = e.shape[1]
        rows = np.repeat(e, k, axis=1).ravel()
        cols = np.tile(e, (1, k)).ravel()
        return Pattern.from_indices(self.n_dofs, rows, cols)

    def to_vertices(self, field: np.ndarray) -> np.ndarray:
        return np.asarray(field)[self.vertex_to_dof]

    def from_vertices(self, values: np.ndarray) -> np.ndarray:
        """Dof values from per-vertex values (last writer wins on identified vertices)."""
        out = np.empty(self.n_dofs)
        out[self.vertex_to_dof] = values
        return out

    def interpolate(self, mesh: Mesh, func) -> np.ndarray:
        """Nodal (Lagrange) interpolant of ``func(x)`` with ``x`` of shape (n, d)."""
        vals = np.broadcast_to(np.asarray(func(mesh.vertices), float), (mesh.n_vertices,))
        return self.from_vertices(vals)


def _check(mesh: Mesh, dofmap: DofMap):
    if dofmap.element_dofs.shape != mesh.elements.shape:
        raise ValueError("dof map does not belong to this mesh")


def _moment_tensor(d: int, order: int) -> np.ndarray:
    """Integrals of products of barycentric coordinates divided by the element measure.

    int_K prod lambda^a = d! |K| prod(a_i!) / (d + sum a)!
    """
    k = d + 1
    T = np.zeros((k,) * order)
    for idx in product(range(k), repeat=order):
        a = np.bincount(idx, minlength=k)
        T[idx] = math.factorial(d) * np.prod([math.factorial(x) for x in a]) / math.factorial(d + order)
    return T


def element_mass(mesh: Mesh) -> np.ndarray:
    """Local unweighted mass matrices, shape (ne, d+1, d+1)."""
    return mesh.measures[:, None, None] * _moment_tensor(mesh.dim, 2)[None]


def assemble_mass(mesh: Mesh, dofmap: DofMap, weight=None) -> SparseMatrix:
    """Mass matrix with entries ``int I_h(weight) psi_i psi_j``.

    ``weight`` is a nodal field (one value per dof), a scalar, or ``None``
    for the unweighted matrix. The weighted integrand is cubic and is
    integrated exactly.
    """
    _check(mesh, dofmap)
    if weight is None or np.isscalar(weight):
        c = 1.0 if weight is None else float(weight)
        if c < 0:
            raise ValueError("mass weight must be nonnegative")
        local = c * element_mass(mesh)
    else:
        weight = np.asarray(weight, float)
        if weight.shape != (dofmap.n_dofs,):
            raise ValueError(f"weight must have one value per dof ({dofmap.n_dofs})")
        if (weight < 0).any():
            raise ValueError(f"negative mass weight at dof {int(np.argmin(weight))}")
        local = _weighted_local(mesh, dofmap, weight)
    return dofmap.pattern.assemble(local)


def _weighted_local(mesh: Mesh, dofmap: DofMap, weight: np.ndarray) -> np.ndarray:
    w = weight[dofmap.element_dofs]
    T3 = _moment_tensor(mesh.dim, 3)
    return mesh.measures[:, None, None] * np.einsum("ek,ijk->eij", w, T3)


def lumped_mass(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    """Row sums of the unweighted mass matrix (|K|/(d+1) per element vertex)."""
    _check(mesh, dofmap)
    share = np.repeat(mesh.measures / (mesh.dim + 1), mesh.dim + 1)
    return np.bincount(dofmap.element_dofs.ravel(), weights=share, minlength=dofmap.n_dofs)


def _as_element_tensors(mesh: Mesh, tensors) -> np.ndarray:
    d, ne = mesh.dim, mesh.n_elements
    t = np.asarray(tensors, float)
    if t.ndim == 0:
        return t * np.broadcast_to(np.eye(d), (ne, d, d))
    if t.shape == (ne,):
        return t[:, None, None] * np.eye(d)[None]
    if t.shape == (d, d):
        return np.broadcast_to(t, (ne, d, d))
    if t.shape == (ne, d, d):
        return t
    raise ValueError(f"tensor field of shape {t.shape} does not fit {ne} elements in {d}d")


def assemble_stiffness(mesh: Mesh, dofmap: DofMap, tensors=1.0) -> SparseMatrix:
    """Stiffness matrix ``sum_K |K| grad psi_i . D_K grad psi_j``.

    ``tensors`` may be a scalar, a (d, d) matrix, one scalar per element or
    one (d, d) symmetric matrix per element.
    """
    _check(mesh, dofmap)
    D = _as_element_tensors(mesh, tensors)
    asym = np.abs(D - np.swapaxes(D, 1, 2)).max(initial=0.0)
    if asym > 1e-12 * max(np.abs(D).max(initial=0.0), 1e-300):
        raise ValueError("element diffusion tensors must be symmetric")
    G = mesh.gradients
    local = mesh.measures[:, None, None] * np.einsum("eia,eab,ejb->eij", G, D, G)
    return dofmap.pattern.assemble(local)


def assemble_gradient_load(mesh: Mesh, dofmap: DofMap, vectors) -> np.ndarray:
    """Load vector ``sum_K |K| g_K . grad psi_i`` for element-constant vectors ``g_K``."""
    _check(mesh, dofmap)
    g = np.broadcast_to(np.asarray(vectors, float), (mesh.n_elements, mesh.dim))
    local = mesh.measures[:, None] * np.einsum("eia,ea->ei", mesh.gradients, g)
    return np.bincount(dofmap.element_dofs.ravel(), weights=local.ravel(), minlength=dofmap.n_dofs)


def centroid_values(dofmap: DofMap, field: np.ndarray) -> np.ndarray:
    return np.asarray(field)[dofmap.element_dofs].mean(axis=1)


def tensor_field_from_phi(mesh: Mesh, dofmap: DofMap, phi: np.ndarray, model) -> np.ndarray:
    """Per-element diffusion tensors ``model(phi)`` at element centroids.

    ``phi`` is clipped to [0, 1] first. Scalar models yield ``D(phi) I``.
    """
    _check(mesh, dofmap)
    pc = np.clip(centroid_values(dofmap, phi), 0.0, 1.0)
    val = np.asarray(model(pc), float)
    d = mesh.dim
    if val.shape == pc.shape:
        return val[:, None, None] * np.eye(d)[None]
    if val.shape == pc.shape + (d, d):
        return val
    raise ValueError(f"diffusivity model returned shape {val.shape} for {d}d")


def assemble_reaction_load(mesh: Mesh, dofmap: DofMap, integrand, mass: SparseMatrix | None = None) -> np.ndarray:
    """``int I_h(integrand) psi_i``, i.e. the mass matrix applied to nodal values."""
    M = assemble_mass(mesh, dofmap) if mass is None else mass
    f = np.broadcast_to(np.asarray(integrand, float), (dofmap.n_dofs,))
    return M @ f
