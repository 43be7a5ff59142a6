import math

import numpy as np
import pytest

from invasim.mesh import HOLE, OUTER, Mesh, boundary_facets, export_mesh, generate_rectangle


def kuhn_cube(n, side=1.0):
    """Structured tetrahedral mesh of [0, side]^3 (six tetrahedra per cube)."""
    g = np.linspace(0.0, side, n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    i, j, k = (a.ravel() for a in np.meshgrid(*(np.arange(n),) * 3, indexing="ij"))
    corner = {(a, b, c): vid(i + a, j + b, k + c) for a in (0, 1) for b in (0, 1) for c in (0, 1)}
    tets = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        path = [(0, 0, 0)]
        cur = [0, 0, 0]
        for ax in perm:
            cur[ax] = 1
            path.append(tuple(cur))
        tets.append(np.column_stack([corner[p] for p in path]))
    tets = np.concatenate(tets)
    x = verts[tets]
    vol = np.einsum("ij,ij->i", x[:, 1] - x[:, 0], np.cross(x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]))
    tets = np.where((vol < 0)[:, None], tets[:, [0, 2, 1, 3]], tets)
    return verts, tets


def sphere_cell(n=30, radius=3 / 25):
    """Unit cube minus a centred sphere, by deleting tetrahedra whose centroid is inside."""
    verts, tets = kuhn_cube(n)
    cen = verts[tets].mean(axis=1)
    keep = ((cen - 0.5) ** 2).sum(axis=1) >= radius ** 2
    tets = tets[keep]
    used = np.unique(tets)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts, tets = verts[used], remap[tets]
    fac = boundary_facets(tets)
    mid = verts[fac].mean(axis=1)
    outer = ((mid < 1e-12) | (mid > 1 - 1e-12)).any(axis=1)
    return Mesh(verts, tets, fac, np.where(outer, OUTER, HOLE)).validate()


@pytest.fixture(scope="session")
def sphere_mesh_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("meshes") / "sphere_cell.mesh"
    export_mesh(sphere_cell(), path)
    return path


@pytest.fixture
def unit_square():
    return generate_rectangle([[0, 1], [0, 1]], 1, 1)


@pytest.fixture
def single_triangle():
    return Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], [0, 0, 0])


# acceptance criteria: one PASS/FAIL line each, repeated in the terminal summary
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
