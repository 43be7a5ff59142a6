"""
Simplicial meshes: structured rectangles, perforated periodic unit cells,
ASCII import/export and periodic vertex identification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

OUTER = 0
HOLE = 1


class MeshError(ValueError):
    """Raised for invalid mesh data or unmeshable geometry."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle (d=2) or tetrahedron (d=3) mesh.

    ``facets`` are the boundary facets (edges in 2d, triangles in 3d) and
    ``facet_tags`` marks each as :data:`OUTER` or :data:`HOLE`.
    """

    vertices: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray

    def __post_init__(self):
        for name, dtype in (("vertices", float), ("elements", np.int64),
                            ("facets", np.int64), ("facet_tags", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d = self.vertices.shape[1] if self.vertices.ndim == 2 else 0
        if d not in (2, 3):
            raise MeshError(f"vertices must have 2 or 3 columns, got shape {self.vertices.shape}")
        if self.elements.ndim != 2 or self.elements.shape[1] != d + 1:
            raise MeshError(f"elements must have {d + 1} columns in {d}d")
        if len(self.facets) == 0:
            object.__setattr__(self, "facets", np.zeros((0, d), dtype=np.int64))
        if self.facets.shape[1] != d:
            raise MeshError(f"facets must have {d} columns in {d}d")
        if self.facet_tags.shape != (len(self.facets),):
            raise MeshError("one tag per facet required")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def _jacobians(self) -> np.ndarray:
        x = self.vertices[self.elements]
        return np.swapaxes(x[:, 1:] - x[:, :1], 1, 2)  # (ne, d, d), columns are edges

    @cached_property
    def signed_measures(self) -> np.ndarray:
        return np.linalg.det(self._jacobians) / math.factorial(self.dim)

    @cached_property
    def measures(self) -> np.ndarray:
        return np.abs(self.signed_measures)

    @cached_property
    def gradients(self) -> np.ndarray:
        """Constant gradients of the P1 hat functions, shape (ne, d+1, d)."""
        inv = np.linalg.inv(self._jacobians)  # rows of inv are grads of lambda_1..lambda_d
        g = np.empty((self.n_elements, self.dim + 1, self.dim))
        g[:, 1:] = inv
        g[:, 0] = -inv.sum(axis=1)
        return g

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def box_measure(self) -> float:
        lo, hi = self.bounding_box
        return float(np.prod(hi - lo))

    def total_measure(self) -> float:
        return float(self.measures.sum())

    def boundary_vertices(self, tag: int | None = None) -> np.ndarray:
        f = self.facets if tag is None else self.facets[self.facet_tags == tag]
        return np.unique(f)

    def validate(self) -> "Mesh":
        """Check the mesh invariants; raise :class:`MeshError` naming the culprit."""
        nv = self.n_vertices
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= nv):
            bad = int(np.nonzero((self.elements < 0).any(1) | (self.elements >= nv).any(1))[0][0])
            raise MeshError(f"element {bad} references a vertex out of range")
        if self.facets.size and (self.facets.min() < 0 or self.facets.max() >= nv):
            raise MeshError("facet references a vertex out of range")
        if not np.isin(self.facet_tags, (OUTER, HOLE)).all():
            raise MeshError("facet tags must be 0 (outer) or 1 (hole)")
        vol = self.signed_measures
        scale = max(self.measures.max(initial=0.0), 1e-300)
        bad = np.nonzero(vol <= 1e-14 * scale)[0]
        if len(bad):
            k = int(bad[0])
            kind = "degenerate" if abs(vol[k]) <= 1e-14 * scale else "inverted"
            raise MeshError(f"element {k} is {kind} (signed measure {vol[k]:.3e})")
        if len(self.facets):
            faces = _element_faces(self.elements)
            keys, counts = np.unique(np.sort(faces, axis=1), axis=0, return_counts=True)
            lookup = {tuple(k): c for k, c in zip(keys.tolist(), counts.tolist())}
            for i, f in enumerate(np.sort(self.facets, axis=1).tolist()):
                if lookup.get(tuple(f), 0) != 1:
                    raise MeshError(f"boundary facet {i} does not belong to exactly one element")
        return self


def _element_faces(elements: np.ndarray) -> np.ndarray:
    k = elements.shape[1]
    return np.concatenate([np.delete(elements, i, axis=1) for i in range(k)])


def boundary_facets(elements: np.ndarray) -> np.ndarray:
    """Facets that belong to exactly one element."""
    faces = _element_faces(np.asarray(elements))
    keys, counts = np.unique(np.sort(faces, axis=1), axis=0, return_counts=True)
    return keys[counts == 1]


# ---------------------------------------------------------------------------
# structured meshes

def generate_rectangle(bounds: Sequence[Sequence[float]], nx: int, ny: int) -> Mesh:
    """Structured triangulation of the box ``[(x0, x1), (y0, y1)]``.

    Each of the ``nx * ny`` cells is split into two triangles along a
    diagonal whose direction alternates in a checkerboard pattern, so the
    mesh is symmetric under reflection about the box centre lines when
    ``nx`` and ``ny`` are even.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"subdivision counts must be positive integers, got nx={nx}, ny={ny}")
    (x0, x1), (y0, y1) = bounds
    if not (x1 > x0 and y1 > y0):
        raise MeshError("empty box")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    flip = (i + j) % 2 == 1
    t1 = np.where(flip[:, None], np.column_stack([v00, v10, v01]), np.column_stack([v00, v10, v11]))
    t2 = np.where(flip[:, None], np.column_stack([v10, v11, v01]), np.column_stack([v00, v11, v01]))
    elems = np.concatenate([t1, t2])

    bottom = np.column_stack([np.arange(nx), np.arange(1, nx + 1)])
    top = bottom + ny * (nx + 1)
    left = np.column_stack([np.arange(ny) * (nx + 1), np.arange(1, ny + 1) * (nx + 1)])
    right = left + nx
    facets = np.concatenate([bottom, top, left, right])
    return Mesh(verts, elems, facets, np.zeros(len(facets), dtype=np.int64))


# ---------------------------------------------------------------------------
# perforated unit cells

@dataclass(frozen=True)
class Circle:
    radius: float

    def area(self) -> float:
        return math.pi * self.radius ** 2

    def extent(self) -> tuple[float, float]:
        return self.radius, self.radius

    def contains(self, p: np.ndarray) -> np.ndarray:
        return (p ** 2).sum(axis=-1) < self.radius ** 2

    def polygon(self, h: float, max_area_error: float) -> np.ndarray:
        m = _polygon_count(self.radius, self.radius, h, max_area_error)
        t = 2 * math.pi * np.arange(m) / m
        return self.radius * np.column_stack([np.cos(t), np.sin(t)])


@dataclass(frozen=True)
class Square:
    half_side: float

    def area(self) -> float:
        return 4 * self.half_side ** 2

    def extent(self) -> tuple[float, float]:
        return self.half_side, self.half_side

    def contains(self, p: np.ndarray) -> np.ndarray:
        return (np.abs(p) < self.half_side).all(axis=-1)

    def polygon(self, h: float, max_area_error: float) -> np.ndarray:
        a = self.half_side
        k = max(1, math.ceil(2 * a / h))
        s = np.linspace(-a, a, k + 1)[:-1]
        return np.concatenate([
            np.column_stack([s, np.full(k, -a)]),
            np.column_stack([np.full(k, a), s]),
            np.column_stack([-s, np.full(k, a)]),
            np.column_stack([np.full(k, -a), -s]),
        ])


@dataclass(frozen=True)
class Ellipse:
    semi_major: float
    semi_minor: float
    angle: float = 0.0  # orientation of the major axis, radians from the x-axis

    def area(self) -> float:
        return math.pi * self.semi_major * self.semi_minor

    def extent(self) -> tuple[float, float]:
        a, b, c, s = self.semi_major, self.semi_minor, math.cos(self.angle), math.sin(self.angle)
        return math.hypot(a * c, b * s), math.hypot(a * s, b * c)

    def _rot(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def contains(self, p: np.ndarray) -> np.ndarray:
        q = p @ self._rot()
        return (q[..., 0] / self.semi_major) ** 2 + (q[..., 1] / self.semi_minor) ** 2 < 1

    def polygon(self, h: float, max_area_error: float) -> np.ndarray:
        m = _polygon_count(self.semi_major, self.semi_minor, h, max_area_error)
        t = 2 * math.pi * np.arange(m) / m
        q = np.column_stack([self.semi_major * np.cos(t), self.semi_minor * np.sin(t)])
        return q @ self._rot().T


def _polygon_count(a: float, b: float, h: float, max_area_error: float) -> int:
    # inscribed polygon at equispaced parameter values is the affine image of a
    # regular polygon, so its area is (m/2) a b sin(2 pi / m)
    m = max(8, math.ceil(2 * math.pi * max(a, b) / h))
    exact = math.pi * a * b
    while exact - 0.5 * m * a * b * math.sin(2 * math.pi / m) > max_area_error:
        m *= 2
    return m


@dataclass(frozen=True)
class PerforationSpec:
    """Square cell ``origin + [0, cell_side]^2`` with an ``n x n`` lattice of
    identical inclusions centred in the lattice sub-squares.

    ``n = 0`` gives an unperforated cell.
    """

    cell_side: float
    n: int
    shape: Circle | Square | Ellipse | None
    target_edge_length: float
    origin: tuple[float, float] = (0.0, 0.0)
    area_tolerance: float = 0.002  # allowed |polygonal - analytic| volume fraction

    def centres(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros((0, 2))
        c = (np.arange(self.n) + 0.5) * self.cell_side / self.n
        X, Y = np.meshgrid(c, c, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()]) + np.asarray(self.origin, float)

    def analytic_volume_fraction(self) -> float:
        if self.n == 0:
            return 1.0
        return 1.0 - self.n ** 2 * self.shape.area() / self.cell_side ** 2

    def check(self) -> None:
        if self.cell_side <= 0 or self.target_edge_length <= 0:
            raise MeshError("cell_side and target_edge_length must be positive")
        if self.n < 0 or int(self.n) != self.n:
            raise MeshError("lattice count must be a non-negative integer")
        if self.n == 0:
            return
        if self.shape is None:
            raise MeshError("an inclusion shape is required when n > 0")
        ex, ey = self.shape.extent()
        pitch = self.cell_side / self.n
        # inclusions must leave a gap to the outer boundary and to their neighbours
        if 2 * ex >= pitch or 2 * ey >= pitch:
            raise MeshError("inclusions overlap each other or touch the outer boundary")
        if isinstance(self.shape, Ellipse) and self.n > 1:
            # tilted ellipses can meet along the lattice diagonal
            t = np.linspace(0.0, 2 * math.pi, 721)
            a, b = self.shape.semi_major, self.shape.semi_minor
            probe = np.column_stack([a * np.cos(t), b * np.sin(t)]) @ self.shape._rot().T
            for shift in ((pitch, pitch), (pitch, -pitch)):
                if self.shape.contains(probe - np.asarray(shift)).any():
                    raise MeshError("inclusions overlap each other")


def generate_perforated_cell(spec: PerforationSpec) -> Mesh:
    """Boundary-fitted triangulation of a periodic cell minus its inclusions.

    Outer-boundary nodes are equispaced and identical on opposite sides so the
    mesh admits a periodic identification. Hole boundaries are polygons fine
    enough that the meshed volume fraction is within ``spec.area_tolerance``
    of the analytic one. The interior is filled by a quality constrained
    Delaunay triangulation (Shewchuk's Triangle) with no Steiner points on the
    boundary segments; triangles whose centroid falls in an inclusion are
    dropped.
    """
    import triangle

    spec.check()
    L, h = spec.cell_side, spec.target_edge_length
    ox, oy = map(float, spec.origin)
    centres = spec.centres()

    holes = []
    if spec.n:
        budget = 0.5 * spec.area_tolerance * L ** 2 / spec.n ** 2
        poly = spec.shape.polygon(h, budget)
        holes = [poly + c for c in centres]

    # outer spacing no coarser than the narrowest gap between a hole and the boundary
    gap = np.inf
    for p in holes:
        gap = min(gap, (p[:, 0] - ox).min(), (ox + L - p[:, 0]).min(),
                  (p[:, 1] - oy).min(), (oy + L - p[:, 1]).min())
    k = max(1, math.ceil(L / min(h, 1.5 * gap)))
    s = np.linspace(0.0, L, k + 1)[:-1]
    outer = np.concatenate([
        np.column_stack([ox + s, np.full(k, oy)]),
        np.column_stack([np.full(k, ox + L), oy + s]),
        np.column_stack([ox + L - s, np.full(k, oy + L)]),
        np.column_stack([np.full(k, ox), oy + L - s]),
    ])

    pts = [outer]
    segs = [_ring(0, len(outer))]
    marks = [np.full(len(outer), 2)]
    offset = len(outer)
    for p in holes:
        pts.append(p)
        segs.append(_ring(offset, len(p)))
        marks.append(np.full(len(p), 3))
        offset += len(p)
    pslg = {
        "vertices": np.concatenate(pts),
        "segments": np.concatenate(segs),
        "segment_markers": np.concatenate(marks)[:, None],
    }
    if spec.n:
        pslg["holes"] = centres
    max_area = math.sqrt(3) / 4 * h ** 2
    out = triangle.triangulate(pslg, f"pq28a{max_area:.15f}YQ")

    verts = out["vertices"]
    tris = out["triangles"]
    if spec.n:
        inside = np.zeros(len(tris), dtype=bool)
        cen = verts[tris].mean(axis=1)
        for c in centres:
            inside |= spec.shape.contains(cen - c)
        tris = tris[~inside]
    # Triangle keeps counter-clockwise orientation; enforce it anyway
    x = verts[tris]
    det = (x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1]) - (x[:, 1, 1] - x[:, 0, 1]) * (x[:, 2, 0] - x[:, 0, 0])
    tris = np.where((det < 0)[:, None], tris[:, [0, 2, 1]], tris)

    used = np.unique(tris)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts, tris = verts[used], remap[tris]

    facets = boundary_facets(tris)
    mid = verts[facets].mean(axis=1)
    on_outer = ((np.abs(mid[:, 0] - ox) < 1e-12 * L) | (np.abs(mid[:, 0] - ox - L) < 1e-12 * L)
                | (np.abs(mid[:, 1] - oy) < 1e-12 * L) | (np.abs(mid[:, 1] - oy - L) < 1e-12 * L))
    tags = np.where(on_outer, OUTER, HOLE)
    mesh = Mesh(verts, tris, facets, tags).validate()

    err = abs(volume_fraction(mesh, L ** 2) - spec.analytic_volume_fraction())
    if err > spec.area_tolerance:
        raise MeshError(f"meshed volume fraction off by {err:.2e}; refine target_edge_length")
    return mesh


def _ring(start: int, n: int) -> np.ndarray:
    i = np.arange(n)
    return np.column_stack([start + i, start + (i + 1) % n])


def volume_fraction(mesh: Mesh, cell_measure: float) -> float:
    """Meshed measure over ``cell_measure``."""
    if cell_measure <= 0:
        raise ValueError("cell_measure must be positive")
    return mesh.total_measure() / cell_measure


# ---------------------------------------------------------------------------
# periodic identification

@dataclass(frozen=True)
class PeriodicPairing:
    """Periodic vertex identification on an axis-aligned box.

    ``representative[v]`` is the master vertex of ``v``'s orbit (``v`` itself
    for unpaired vertices and masters). ``pairs`` lists the raw
    ``(low_face_vertex, high_face_vertex, axis)`` matches before transitive
    merging.
    """

    representative: np.ndarray
    pairs: list = field(default_factory=list)

    @property
    def slaves(self) -> np.ndarray:
        return np.nonzero(self.representative != np.arange(len(self.representative)))[0]

    @property
    def masters(self) -> np.ndarray:
        return self.representative[self.slaves]

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.slaves.tolist(), self.masters.tolist()))


def periodic_pairs(mesh: Mesh, rtol: float = 1e-9) -> PeriodicPairing:
    """Match outer-boundary vertices on opposite faces of the bounding box.

    Corner and edge vertices are merged transitively; each orbit is
    represented by its lexicographically lowest vertex (lowest coordinates).
    Hole vertices never lie on the box faces for valid perforations.
    """
    lo, hi = mesh.bounding_box
    scale = float((hi - lo).max())
    tol = rtol * scale
    x = mesh.vertices
    cand = mesh.boundary_vertices(OUTER)
    parent = np.arange(mesh.n_vertices)

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    pairs = []
    for axis in range(mesh.dim):
        low = cand[np.abs(x[cand, axis] - lo[axis]) <= tol]
        high = cand[np.abs(x[cand, axis] - hi[axis]) <= tol]
        if len(low) != len(high):
            raise MeshError(f"axis {axis}: {len(low)} vertices on the low face vs {len(high)} on the high face")
        other = [a for a in range(mesh.dim) if a != axis]
        kl = np.lexsort(x[low][:, other[::-1]].T)
        kh = np.lexsort(x[high][:, other[::-1]].T)
        low, high = low[kl], high[kh]
        diff = np.abs(x[low][:, other] - x[high][:, other]).max(initial=0.0)
        if diff > tol:
            raise MeshError(f"axis {axis}: opposite-face vertices do not match (max offset {diff:.3e})")
        for a, b in zip(low.tolist(), high.tolist()):
            pairs.append((a, b, axis))
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb, key=lambda v: tuple(x[v]))] = min(ra, rb, key=lambda v: tuple(x[v]))
    rep = np.array([find(v) for v in range(mesh.n_vertices)], dtype=np.int64)
    return PeriodicPairing(rep, pairs)


# ---------------------------------------------------------------------------
# ASCII mesh format: "dim nv ne nf", nv coordinate lines, ne element lines,
# nf facet lines (vertex indices followed by tag 0=outer, 1=hole). 0-based.

def export_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_elements} {len(mesh.facets)}"]
    lines += [" ".join(f"{c:.17g}" for c in row) for row in mesh.vertices.tolist()]
    lines += [" ".join(map(str, row)) for row in mesh.elements.tolist()]
    lines += [" ".join(map(str, f + [t])) for f, t in zip(mesh.facets.tolist(), mesh.facet_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def import_mesh(path) -> Mesh:
    """Read and validate a mesh in the ASCII format written by :func:`export_mesh`."""
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        dim, nv, ne, nf = map(int, rows[0])
        if dim not in (2, 3):
            raise MeshError(f"unsupported dimension {dim}")
        body = rows[1:]
        if len(body) != nv + ne + nf:
            raise MeshError(f"expected {nv + ne + nf} data lines after the header, found {len(body)}")
        verts = np.array(body[:nv], dtype=float).reshape(nv, dim)
        elems = np.array(body[nv:nv + ne], dtype=np.int64).reshape(ne, dim + 1)
        fac = np.array(body[nv + ne:], dtype=np.int64).reshape(nf, dim + 1)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"cannot parse mesh file {path}: {exc}") from exc
    return Mesh(verts, elems, fac[:, :dim], fac[:, dim]).validate()
