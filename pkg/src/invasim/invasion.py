"""
Macroscopic MMP-mediated invasion model and its IMEX finite-element scheme.

Unknowns (nodal P1 fields): ECM volume fraction ``phi``, soluble MMP
concentration ``cs``, bound MMPs ``w = c_b (1 - phi)`` and matrix
suitability ``s``. Per step the update order is

1. ``phi`` explicit,
2. ``cs`` with implicit diffusion ``D_s(phi^n)`` and explicit reactions,
3. ``w`` explicit,
4. ``s`` explicit (kept at zero when suitability is disabled).

All reaction terms use the previous time level, so a spatially homogeneous
state follows the forward Euler map of the reaction ODEs exactly.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .diffusivity import REFERENCE_2D, REFERENCE_3D
from .fem import DofMap, assemble_mass, assemble_stiffness, lumped_mass, tensor_field_from_phi
from .mesh import Mesh
from .sparse import SparseMatrix, cg_solve

log = logging.getLogger(__name__)

PHI_TOL = 1e-8
S_TOL = 1e-8
MMP_TOL = 1e-6


class InvariantError(RuntimeError):
    """A field left its admissible range."""


def f_b(phi):
    return phi / (1.0 + phi)


def f_s(cs):
    return 1.0 / (1.0 + cs)


@dataclass(frozen=True)
class ModelParams:
    """Nondimensional rates; defaults are the reference parameter set."""

    kappa_s: float = 4.0
    kappa_b: float = 5.0
    mu_s: float = 1.0
    mu_b: float = 1.0
    beta_s: float = 0.1
    beta_b: float = 0.1
    delta_s: float = 1.0
    d_ref: float = 1.29e-2  # D_s at phi = 1
    diffusivity: object = None  # callable phi -> D; None picks the fitted cubic for the dimension
    suitability_enabled: bool = False

    def __post_init__(self):
        for name in ("kappa_s", "kappa_b", "mu_s", "mu_b", "beta_s", "beta_b", "delta_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_ref <= 0:
            raise ValueError("d_ref must be positive")

    def diffusivity_model(self, dim: int):
        if self.diffusivity is not None:
            return self.diffusivity
        return (REFERENCE_2D if dim == 2 else REFERENCE_3D).with_reference(self.d_ref)

    def mmp_bounds(self, cs0_max: float = 0.0, w0_max: float = 0.0) -> tuple[float, float]:
        """``M_s = max(M_s0, kappa_s/beta_s)`` and ``M_b = max(M_b0, kappa_b/beta_b)``."""
        return (max(cs0_max, _ratio(self.kappa_s, self.beta_s)),
                max(w0_max, _ratio(self.kappa_b, self.beta_b)))


def _ratio(k, b):
    if b > 0:
        return k / b
    return 0.0 if k == 0 else math.inf


@dataclass
class FieldState:
    phi: np.ndarray
    cs: np.ndarray
    w: np.ndarray
    s: np.ndarray
    t: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(self.phi.copy(), self.cs.copy(), self.w.copy(), self.s.copy(), self.t)

    @property
    def cb(self) -> np.ndarray:
        """Bound MMP density ``w/(1 - phi)``, zero where ``1 - phi <= 1e-10``."""
        gap = 1.0 - self.phi
        out = np.zeros_like(self.w)
        ok = gap > 1e-10
        out[ok] = self.w[ok] / gap[ok]
        return out

    def fields(self) -> dict:
        return {"phi": self.phi, "cs": self.cs, "w": self.w, "s": self.s, "cb": self.cb}


def reaction_rates(p: ModelParams, phi, cs, w, s):
    """Right-hand sides of the reaction ODEs (no diffusion)."""
    free = 1.0 - s if p.suitability_enabled else 1.0
    dphi = -free * (p.mu_b * phi * w + p.mu_s * phi * cs)
    dcs = p.kappa_s * f_s(cs) * (1 - phi) - (free * p.mu_s * phi + p.beta_s) * cs
    dw = p.kappa_b * f_b(phi) * (1 - phi) - (free * p.mu_b * phi + p.beta_b) * w
    ds = -p.delta_s * w * s if p.suitability_enabled else np.zeros_like(np.asarray(s, float))
    return dphi, dcs, dw, ds


# ---------------------------------------------------------------------------
# invaded region

def invaded_area_fraction(mesh: Mesh, phi, threshold: float = 0.25) -> float:
    """Fraction of the domain where the P1 interpolant of ``phi`` lies below ``threshold``.

    Sub-level measures are exact per element.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    vals = np.asarray(phi, float)[mesh.elements]
    frac = sublevel_fraction(vals, threshold)
    return float(mesh.measures @ frac / mesh.total_measure())


def sublevel_fraction(vals: np.ndarray, t: float) -> np.ndarray:
    """Fraction of each simplex where the linear interpolant of the vertex values is below ``t``."""
    v = np.sort(vals, axis=1)
    if v.shape[1] == 3:
        v0, v1, v2 = v.T
        out = np.zeros(len(v))
        out[(v2 <= t) & (v0 < t)] = 1.0
        a = (v0 < t) & (t <= v1)
        out[a] = (t - v0[a]) ** 2 / ((v1[a] - v0[a]) * (v2[a] - v0[a]))
        b = (v1 < t) & (t < v2)
        out[b] = 1.0 - (v2[b] - t) ** 2 / ((v2[b] - v0[b]) * (v2[b] - v1[b]))
        return out
    return _sublevel_general(v, t)


def _sublevel_general(v: np.ndarray, t: float) -> np.ndarray:
    # tetrahedra, sorted values v0 <= v1 <= v2 <= v3; every case is a ratio of
    # nonnegative terms, so ties need no special handling
    v0, v1, v2, v3 = v.T
    out = np.zeros(len(v))
    out[(v3 <= t) & (v0 < t)] = 1.0  # a simplex constant at t has no part strictly below
    lo = (v0 < t) & (t <= v1)
    out[lo] = (t - v0[lo]) ** 3 / ((v1[lo] - v0[lo]) * (v2[lo] - v0[lo]) * (v3[lo] - v0[lo]))
    hi = (v2 <= t) & (t < v3)
    out[hi] = 1.0 - (v3[hi] - t) ** 3 / ((v3[hi] - v0[hi]) * (v3[hi] - v1[hi]) * (v3[hi] - v2[hi]))
    mid = (v1 < t) & (t < v2)
    a, b, p, q = t - v0[mid], t - v1[mid], v2[mid] - t, v3[mid] - t
    num = a * a * b * b + a * b * (a + b) * (p + q) + p * q * (a * a + a * b + b * b)
    out[mid] = num / ((a + p) * (a + q) * (b + p) * (b + q))
    return out


# ---------------------------------------------------------------------------
# initial data

def _ellipse2d(x):
    return 1 - np.exp(-((4 * x[:, 0]) ** 2 + (8 * x[:, 1]) ** 2))


def _ellipse3d(x):
    return 1 - np.exp(-((4 * x[:, 0]) ** 2 + (4 * x[:, 1]) ** 2 + (8 * x[:, 2]) ** 2))


def _lowsuit_s(x):
    return 1 - 0.1 * (np.cos(4 * np.pi * x[:, 0]) * np.cos(4 * np.pi * x[:, 1])) ** 2


def _deakin_phi(x):
    return 1 - np.exp(-4 * (1 + x[:, 0]))


def _checker_s(x):
    return 0.5 * (1 + np.cos(4 * np.pi * x[:, 0]) * np.cos(4 * np.pi * x[:, 1]))


PRESETS = {
    # name: (dim, phi0, s0 or None)
    "ellipse2d": (2, _ellipse2d, None),
    "ellipse3d": (3, _ellipse3d, None),
    "lowsuit2d": (2, _ellipse2d, _lowsuit_s),
    "deakin2d": (2, _deakin_phi, _checker_s),
}
SUITABILITY_PRESETS = {"lowsuit2d", "deakin2d"}


def initial_preset(name: str, mesh: Mesh) -> FieldState:
    """Nodal interpolant of a named initial condition; MMP fields start at zero."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    dim, phi0, s0 = PRESETS[name]
    if mesh.dim != dim:
        raise ValueError(f"preset {name!r} needs a {dim}d mesh")
    x = mesh.vertices
    n = mesh.n_vertices
    s = s0(x) if s0 is not None else np.zeros(n)
    return FieldState(phi0(x), np.zeros(n), np.zeros(n), s)


def state_from_functions(mesh: Mesh, phi, cs=0.0, w=0.0, s=0.0) -> FieldState:
    """Interpolate callables ``f(x)`` (or constants) at the mesh vertices."""
    x = mesh.vertices

    def ev(f):
        v = f(x) if callable(f) else f
        return np.array(np.broadcast_to(np.asarray(v, float), (mesh.n_vertices,)))

    return FieldState(ev(phi), ev(cs), ev(w), ev(s))


# ---------------------------------------------------------------------------
# bounds

@dataclass
class BoundViolation:
    field: str
    node: int
    value: float
    lower: float
    upper: float

    def __str__(self):
        return f"{self.field}[{self.node}] = {self.value:.6g} outside [{self.lower:g}, {self.upper:g}]"


def find_violations(state: FieldState, ms: float, mb: float, suitability: bool = True) -> list:
    checks = [("phi", state.phi, 0.0, 1.0 + PHI_TOL),
              ("cs", state.cs, 0.0, ms + MMP_TOL),
              ("w", state.w, 0.0, mb + MMP_TOL)]
    if suitability:
        checks.append(("s", state.s, 0.0, 1.0 + S_TOL))
    out = []
    for name, v, lo, hi in checks:
        bad = np.flatnonzero((v < lo) | (v > hi) | ~np.isfinite(v))
        if len(bad):
            i = bad[np.argmax(np.maximum(lo - v[bad], v[bad] - hi))]
            out.append(BoundViolation(name, int(i), float(v[i]), lo, hi))
    return out


# ---------------------------------------------------------------------------
# solver

@dataclass
class InvasionSolver:
    """IMEX time stepper on a fixed mesh.

    Parameters
    ----------
    mass : {"lumped", "consistent"}
        Mass matrix used in the implicit ``cs`` system. The lumped default
        gives an M-matrix on meshes without obtuse angles, hence a discrete
        maximum principle; the consistent matrix can undershoot below zero
        near steep sources on coarse meshes.
    strict : bool
        Raise :class:`InvariantError` when a bound is violated; otherwise
        warn and clip.
    """

    mesh: Mesh
    params: ModelParams
    mass: str = "lumped"
    tol: float = 1e-10
    strict: bool = True
    dofmap: DofMap = field(init=False)
    bounds: tuple = field(init=False, default=(math.inf, math.inf))

    def __post_init__(self):
        self.dofmap = DofMap.identity(self.mesh)
        self.model = self.params.diffusivity_model(self.mesh.dim)
        if self.mass == "lumped":
            self._lumped = lumped_mass(self.mesh, self.dofmap)
            self.M = None
        elif self.mass == "consistent":
            self.M = assemble_mass(self.mesh, self.dofmap)
            self._lumped = None
        else:
            raise ValueError(f"unknown mass option {self.mass!r}")
        self._total = float(self.apply_mass(np.ones(self.mesh.n_vertices)).sum())
        self.last_iterations = 0
        self.last_snapped = 0

    def apply_mass(self, v: np.ndarray) -> np.ndarray:
        return self._lumped * v if self.M is None else self.M @ v

    def cs_mass(self, state: FieldState) -> float:
        return float(self.apply_mass(state.cs).sum())

    def system(self, phi: np.ndarray, tau: float) -> SparseMatrix:
        tensors = tensor_field_from_phi(self.mesh, self.dofmap, phi, self.model)
        K = assemble_stiffness(self.mesh, self.dofmap, tensors)
        if self.M is None:
            diag = np.zeros_like(K.values)
            rows = np.repeat(np.arange(K.n), np.diff(K.row_offsets))
            on = K.column_indices == rows
            diag[on] = self._lumped[rows[on]]
            return K.same_pattern(diag + tau * K.values)
        return self.M + K * tau

    def start(self, state: FieldState) -> FieldState:
        """Fix the MMP bounds from the initial data and check it."""
        self.bounds = self.params.mmp_bounds(float(np.max(state.cs, initial=0.0)),
                                             float(np.max(state.w, initial=0.0)))
        return self._enforce(state)

    def step(self, state: FieldState, tau: float) -> FieldState:
        if tau <= 0:
            raise ValueError("time step must be positive")
        p = self.params
        dphi, dcs, dw, ds = reaction_rates(p, state.phi, state.cs, state.w, state.s)
        phi = state.phi + tau * dphi
        rhs_nodal = state.cs + tau * dcs
        A = self.system(phi, tau)
        b = self.apply_mass(rhs_nodal)
        cs, rep = cg_solve(A, b, tol=self.tol, x0=rhs_nodal)
        self.last_iterations = rep.iterations
        # constants lie in the stiffness kernel, so the exact solution has
        # sum(M cs) = sum(b); remove the solver's drift in that mode
        cs += (b.sum() - self.apply_mass(cs).sum()) / self._total
        # negatives below the algebraic accuracy of the solve are round-off
        noise = (cs < 0) & (cs >= -self.tol * max(1.0, float(np.abs(cs).max())))
        self.last_snapped = int(noise.sum())
        cs[noise] = 0.0
        w = state.w + tau * dw
        s = state.s + tau * ds if p.suitability_enabled else state.s.copy()
        return self._enforce(FieldState(phi, cs, w, s, state.t + tau))

    def _enforce(self, state: FieldState) -> FieldState:
        ms, mb = self.bounds
        bad = find_violations(state, ms, mb, self.params.suitability_enabled)
        if not bad:
            return state
        msg = f"t = {state.t:.6g}: " + "; ".join(map(str, bad))
        if self.strict:
            raise InvariantError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        state.phi = np.clip(state.phi, 0.0, 1.0)
        state.cs = np.clip(state.cs, 0.0, ms)
        state.w = np.clip(state.w, 0.0, mb)
        state.s = np.clip(state.s, 0.0, 1.0)
        return state

    def metrics(self, state: FieldState, threshold: float = 0.25) -> dict:
        row = {"t": state.t, "invaded_fraction": invaded_area_fraction(self.mesh, state.phi, threshold)}
        for name in ("phi", "cs", "w", "s"):
            v = getattr(state, name)
            row[f"{name}_min"] = float(v.min())
            row[f"{name}_max"] = float(v.max())
        row["cs_mass"] = self.cs_mass(state)
        row["cg_iterations"] = self.last_iterations
        row["snapped"] = self.last_snapped
        return row


METRIC_COLUMNS = ("t", "invaded_fraction", "phi_min", "phi_max", "cs_min", "cs_max",
                  "w_min", "w_max", "s_min", "s_max", "cs_mass", "cg_iterations", "snapped")


@dataclass
class RunResult:
    snapshots: list  # FieldState copies
    metrics: list  # dict rows, one per step including t = 0
    mesh: Mesh = None


def integrate(solver: InvasionSolver, state: FieldState, tau: float, T: float,
              snapshot_every: int = 0, snapshot_times=(), callback=None) -> RunResult:
    """March ``N = round(T/tau)`` uniform steps from ``state``."""
    if T < 0:
        raise ValueError("final time must be nonnegative")
    n_steps = int(round(T / tau)) if T > 0 else 0
    if n_steps and abs(n_steps * tau - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T = {T} is not a multiple of tau = {tau}")
    want = {int(round(ts / tau)) for ts in snapshot_times}
    state = solver.start(state.copy())
    solver.last_iterations = solver.last_snapped = 0
    metrics = [solver.metrics(state)]
    snaps = [state.copy()]
    if callback:
        callback(0, state)
    for k in range(1, n_steps + 1):
        state = solver.step(state, tau)
        state.t = k * tau  # avoid accumulated rounding in t
        metrics.append(solver.metrics(state))
        if (snapshot_every and k % snapshot_every == 0) or k in want or k == n_steps:
            snaps.append(state.copy())
            if callback:
                callback(k, state)
    return RunResult(snaps, metrics, solver.mesh)


def run(config) -> RunResult:
    """Run a :class:`~invasim.io.SimulationConfig` (snapshots kept in memory only)."""
    mesh = config.build_mesh()
    solver = InvasionSolver(mesh, config.params, mass=config.mass, tol=config.solver_tol,
                            strict=not config.permissive)
    state = config.initial_state(mesh)
    return integrate(solver, state, config.tau, config.T, config.snapshot_every, config.snapshot_times)


def with_rates(params: ModelParams, **kw) -> ModelParams:
    return replace(params, **kw)
