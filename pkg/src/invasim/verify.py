"""
Independent oracles and invariant monitors.

* :func:`ode_oracle` integrates the reaction ODEs of a spatially homogeneous
  state with classical RK4, halving the step until successive refinements
  agree.
* :func:`check_bounds` evaluates the admissible ranges of all fields.
* :func:`dilute_limit_check` compares a homogenized tensor with the
  Maxwell-Garnett value.

The ``run_*`` functions bundle these into the suites used by ``invasim verify``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .homog import EffectiveTensor, maxwell_garnett
from .invasion import (FieldState, InvasionSolver, ModelParams, find_violations, integrate,
                       reaction_rates, state_from_functions)


@dataclass
class OracleReport:
    scenario: str
    max_abs: float
    max_rel: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.scenario:<34} abs={self.max_abs:.3e} rel={self.max_rel:.3e} tol={self.tolerance:.1e}  {self.detail}"


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# ODE oracle

def _rhs(params: ModelParams, y):
    return np.array(reaction_rates(params, y[0], y[1], y[2], y[3]), float)


def _rk4(params, y0, T, n, times):
    h = T / n
    y = np.array(y0, float)
    out = [y.copy()]
    marks = set(int(round(t / h)) for t in times[1:])
    for k in range(1, n + 1):
        k1 = _rhs(params, y)
        k2 = _rhs(params, y + 0.5 * h * k1)
        k3 = _rhs(params, y + 0.5 * h * k2)
        k4 = _rhs(params, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if k in marks:
            out.append(y.copy())
    return np.array(out)


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (len(t), 4): phi, cs, w, s
    steps: int

    def at_end(self) -> np.ndarray:
        return self.y[-1]


def ode_oracle(params: ModelParams, y0, T: float, rtol: float = 1e-8, n_out: int = 1,
               n0: int = 16, max_halvings: int = 20) -> Trajectory:
    """Homogeneous-state reference solution ``(phi, cs, w, s)`` at ``n_out + 1`` equispaced times.

    The step is halved until two successive solutions agree to
    ``rtol * max(1, |y|)`` at every output time.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    y0 = np.asarray(y0, float)
    times = np.linspace(0.0, T, n_out + 1)
    if T == 0:
        return Trajectory(times, y0[None].copy(), 0)
    n = max(n0, n_out)
    n -= n % n_out
    prev = _rk4(params, y0, T, n, times)
    for _ in range(max_halvings):
        n *= 2
        cur = _rk4(params, y0, T, n, times)
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(1.0, np.abs(cur))):
            return Trajectory(times, cur, n)
        prev = cur
    raise OracleError(f"RK4 step refinement did not reach rtol={rtol} with {n} steps")


def forward_euler(params: ModelParams, y0, T: float, tau: float) -> np.ndarray:
    y = np.array(y0, float)
    for _ in range(int(round(T / tau))):
        y = y + tau * _rhs(params, y)
    return y


# ---------------------------------------------------------------------------
# bounds

def check_bounds(state: FieldState, params: ModelParams, bounds: tuple | None = None,
                 require_positive_phi: bool = False, scenario: str = "bounds") -> OracleReport:
    """All field ranges; ``bounds = (M_s, M_b)`` defaults to ``params.mmp_bounds()``."""
    ms, mb = params.mmp_bounds() if bounds is None else bounds
    bad = find_violations(state, ms, mb, suitability=True)
    dev = 0.0
    for b in bad:
        dev = max(dev, b.lower - b.value, b.value - b.upper)
    msgs = [str(b) for b in bad]
    if require_positive_phi and not state.phi.min() > 0:
        i = int(np.argmin(state.phi))
        msgs.append(f"phi[{i}] = {state.phi[i]:.3g} is not strictly positive")
    ok = not msgs
    scale = max(1.0, ms, mb)
    return OracleReport(scenario, float(dev), float(dev / scale), 0.0, ok, "; ".join(msgs))


# ---------------------------------------------------------------------------
# homogenization

def dilute_limit_check(tensor: EffectiveTensor, theta: float, d: int, tol: float = 0.01,
                       scenario: str = "dilute limit") -> OracleReport:
    if not 0 <= theta <= 0.05:
        raise ValueError(f"inclusion fraction {theta} is outside the dilute regime (<= 0.05)")
    ref = maxwell_garnett(theta, d)
    val = tensor.mean_diagonal() / tensor.diffusivity
    dev = abs(val - ref)
    return OracleReport(scenario, dev, dev / ref, tol, dev <= tol,
                        f"computed {val:.5f} vs Maxwell-Garnett {ref:.5f}")


# ---------------------------------------------------------------------------
# suites

def run_ode_suite() -> list:
    reps = []
    # closed-form exponential decay
    p = ModelParams(kappa_s=0, kappa_b=0, mu_s=0, mu_b=0, delta_s=0)
    tr = ode_oracle(p, (0.5, 1.0, 1.0, 0.0), 5.0, n_out=5)
    exact = np.exp(-0.1 * tr.t)
    err = max(np.abs(tr.y[:, 1] - exact).max(), np.abs(tr.y[:, 2] - exact).max())
    reps.append(OracleReport("ode: exponential decay", err, err, 1e-8, err <= 1e-8))
    # fixed point of the reference rates
    tr = ode_oracle(ModelParams(), (1.0, 0.0, 0.0, 0.0), 5.0)
    err = float(np.abs(tr.at_end() - np.array([1.0, 0, 0, 0])).max())
    reps.append(OracleReport("ode: phi=1 fixed point", err, err, 0.0, err == 0.0))
    # self-consistency of the refinement
    p = ModelParams(suitability_enabled=True)
    a = ode_oracle(p, (0.8, 0.5, 0.5, 0.6), 5.0).at_end()
    b = ode_oracle(p, (0.8, 0.5, 0.5, 0.6), 5.0, n0=32).at_end()
    err = float(np.abs(a - b).max())
    reps.append(OracleReport("ode: step-halving consistency", err, err, 1e-8, err <= 1e-8))
    return reps


def homogeneous_error(params: ModelParams, y0, T: float, tau: float, mesh=None) -> float:
    """Max-over-components error of the FE scheme on a homogeneous state vs the ODE oracle."""
    from .mesh import generate_rectangle

    mesh = generate_rectangle([[0, 1], [0, 1]], 4, 4) if mesh is None else mesh
    solver = InvasionSolver(mesh, params)
    st = state_from_functions(mesh, *y0)
    res = integrate(solver, st, tau, T)
    fin = res.snapshots[-1]
    got = np.array([fin.phi.mean(), fin.cs.mean(), fin.w.mean(), fin.s.mean()])
    ref = ode_oracle(params, y0, T).at_end()
    return float(np.abs(got - ref).max())


def run_invasion_suite(quick: bool = True) -> list:
    from .mesh import generate_rectangle

    reps = []
    p = ModelParams(suitability_enabled=True)
    y0 = (0.8, 0.5, 0.5, 0.6)
    e1 = homogeneous_error(p, y0, 1.0, 1e-2)
    e2 = homogeneous_error(p, y0, 1.0, 5e-3)
    ratio = e1 / e2
    reps.append(OracleReport("invasion: first-order convergence", abs(ratio - 2.0), abs(ratio - 2.0) / 2,
                             0.3, abs(ratio - 2.0) <= 0.3, f"error ratio {ratio:.3f}"))
    # homogeneous reduction equals forward Euler of the ODEs
    mesh = generate_rectangle([[0, 1], [0, 1]], 4, 4)
    res = integrate(InvasionSolver(mesh, p), state_from_functions(mesh, *y0), 1e-2, 0.5)
    fin = res.snapshots[-1]
    got = np.array([fin.phi, fin.cs, fin.w, fin.s])
    fe = forward_euler(p, y0, 0.5, 1e-2)
    err = float(np.abs(got - fe[:, None]).max())
    reps.append(OracleReport("invasion: homogeneous = Euler", err, err, 1e-12, err <= 1e-12))
    # bounds on a coarse ellipse run
    from .invasion import initial_preset
    n = 40 if quick else 113
    T = 1.0 if quick else 5.0
    mesh = generate_rectangle([[-1, 1], [-1, 1]], n + 1, n + 1)
    solver = InvasionSolver(mesh, ModelParams())
    worst = []

    def monitor(k, st):
        worst.append(check_bounds(st, solver.params, solver.bounds, require_positive_phi=True))

    integrate(solver, initial_preset("ellipse2d", mesh), 1e-2, T, snapshot_every=1, callback=monitor)
    failed = [r for r in worst if not r.passed]
    dev = max((r.max_abs for r in worst), default=0.0)
    reps.append(OracleReport(f"invasion: bounds ellipse2d T={T:g}", dev, dev, 0.0, not failed,
                             failed[0].detail if failed else f"{len(worst)} states checked"))
    return reps


def run_homog_suite(h: float = 0.02) -> list:
    from .homog import effective_tensor
    from .mesh import Circle, PerforationSpec, generate_perforated_cell, generate_rectangle

    reps = []
    t = effective_tensor(generate_rectangle([[0, 1], [0, 1]], 8, 8))
    reps.append(dilute_limit_check(t, 0.0, 2, scenario="homog: unperforated cell"))
    for n in range(1, 7):
        spec = PerforationSpec(1.0, n, Circle(3 / 40), h)
        theta = n * n * math.pi * (3 / 40) ** 2
        if theta > 0.05:
            continue
        mesh = generate_perforated_cell(spec)
        t = effective_tensor(mesh)
        reps.append(dilute_limit_check(t, 1 - t.volume_fraction, 2, scenario=f"homog: circles n={n}"))
    return reps


SUITES = {"ode": run_ode_suite, "invasion": run_invasion_suite, "homog": run_homog_suite}


def run_suites(scopes=("ode", "homog", "invasion")) -> list:
    reps = []
    for s in scopes:
        if s not in SUITES:
            raise ValueError(f"unknown scope {s!r}; choose from {sorted(SUITES)}")
        reps += SUITES[s]()
    return reps
