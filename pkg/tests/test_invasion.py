import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from invasim.invasion import (METRIC_COLUMNS, FieldState, InvariantError, InvasionSolver, ModelParams,
                              f_b, f_s, initial_preset, integrate, invaded_area_fraction,
                              state_from_functions, sublevel_fraction, with_rates)
from invasim.mesh import Mesh, generate_rectangle
from invasim.verify import forward_euler


@pytest.fixture(scope="module")
def square():
    return generate_rectangle([[-1, 1], [-1, 1]], 8, 8)


ZERO_RATES = dict(kappa_s=0, kappa_b=0, mu_s=0, mu_b=0, beta_s=0, beta_b=0, delta_s=0)


# ---------------------------------------------------------------- reaction terms

@given(st.floats(0, 1))
def test_f_b_range(phi):
    assert 0 <= f_b(phi) <= 0.5


@given(st.floats(0, 1e6))
def test_f_s_range(c):
    assert 0 < f_s(c) <= 1


def test_reference_bounds():
    assert ModelParams().mmp_bounds() == (40.0, 50.0)
    assert ModelParams().mmp_bounds(55.0, 3.0) == (55.0, 50.0)
    with pytest.raises(ValueError):
        ModelParams(mu_s=-1)


# ---------------------------------------------------------------- invaded area

def test_invaded_fraction_constant_fields(square):
    n = square.n_vertices
    assert invaded_area_fraction(square, np.zeros(n)) == 1.0
    assert invaded_area_fraction(square, np.ones(n)) == 0.0
    with pytest.raises(ValueError):
        invaded_area_fraction(square, np.ones(n), threshold=1.0)


def _mc_fraction(corners, values, t, n=2_000_000, seed=0):
    rng = np.random.default_rng(seed)
    k = len(values)
    lam = rng.dirichlet(np.ones(k), size=n)  # uniform on the simplex
    return float(np.mean(lam @ np.asarray(values, float) < t))


def test_unit_triangle_sublevel_against_sampling(single_triangle):
    exact = invaded_area_fraction(single_triangle, np.array([0.0, 0.0, 0.5]))
    assert exact == pytest.approx(0.75, abs=1e-14)
    assert exact == pytest.approx(_mc_fraction(None, [0, 0, 0.5], 0.25), abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(vals=st.lists(st.floats(0, 1), min_size=3, max_size=4), t=st.floats(0.05, 0.95))
def test_sublevel_fraction_matches_sampling(vals, t):
    assume(max(vals) - min(vals) > 1e-6)  # sampling cannot resolve a constant field at t
    got = sublevel_fraction(np.array([vals]), t)[0]
    assert 0 <= got <= 1
    assert got == pytest.approx(_mc_fraction(None, vals, t, n=200_000, seed=1), abs=5e-3)


def test_sublevel_of_constant_at_threshold_is_empty():
    assert sublevel_fraction(np.array([[0.5, 0.5, 0.5]]), 0.5)[0] == 0.0
    assert sublevel_fraction(np.array([[0.5, 0.5, 0.5, 0.5]]), 0.5)[0] == 0.0
    assert sublevel_fraction(np.array([[0.2, 0.5, 0.5]]), 0.5)[0] == 1.0


def test_sublevel_in_3d_handles_ties():
    got = sublevel_fraction(np.array([[0.0, 0.0, 1.0, 1.0], [0.2, 0.2, 0.2, 0.9]]), 0.5)
    assert got[0] == pytest.approx(0.5, abs=1e-6)
    assert got[1] == pytest.approx(1 - (0.4 / 0.7) ** 3, abs=1e-6)


def test_area_fraction_of_half_plane():
    m = generate_rectangle([[0, 1], [0, 1]], 5, 5)
    phi = m.vertices[:, 0]
    assert invaded_area_fraction(m, phi, 0.3) == pytest.approx(0.3, abs=1e-14)


# ---------------------------------------------------------------- presets

def test_presets_at_special_points():
    m = generate_rectangle([[-1, 1], [-1, 1]], 4, 4)
    origin = np.flatnonzero(np.all(m.vertices == 0, axis=1))[0]
    left = np.flatnonzero(m.vertices[:, 0] == -1)
    e = initial_preset("ellipse2d", m)
    assert e.phi[origin] == 0.0
    assert not e.cs.any() and not e.w.any()
    d = initial_preset("deakin2d", m)
    assert np.all(d.phi[left] == 0.0)
    assert ((d.s >= 0) & (d.s <= 1)).all()
    low = initial_preset("lowsuit2d", m)
    assert low.s[origin] == pytest.approx(0.9)
    with pytest.raises(ValueError):
        initial_preset("ellipse3d", m)
    with pytest.raises(ValueError):
        initial_preset("nope", m)


# ---------------------------------------------------------------- time stepping

def test_fixed_point_is_preserved(square):
    solver = InvasionSolver(square, ModelParams())
    st0 = state_from_functions(square, 1.0)
    st1 = solver.step(solver.start(st0), 1e-2)
    assert np.array_equal(st1.phi, st0.phi)
    assert np.array_equal(st1.cs, st0.cs)
    assert np.array_equal(st1.w, st0.w)


def test_zero_final_time_returns_initial_data(square):
    solver = InvasionSolver(square, ModelParams())
    st0 = initial_preset("ellipse2d", square)
    res = integrate(solver, st0, 1e-2, 0.0)
    assert len(res.snapshots) == 1 and len(res.metrics) == 1
    assert np.array_equal(res.snapshots[0].phi, st0.phi)


@pytest.mark.parametrize("suit", [False, True])
def test_homogeneous_state_is_forward_euler(square, suit):
    p = ModelParams(suitability_enabled=suit)
    y0 = (0.7, 0.4, 0.9, 0.5)
    res = integrate(InvasionSolver(square, p), state_from_functions(square, *y0), 1e-2, 0.3)
    fin = res.snapshots[-1]
    ref = forward_euler(p, y0, 0.3, 1e-2)
    for k, name in enumerate(("phi", "cs", "w", "s")):
        assert np.allclose(getattr(fin, name), ref[k], rtol=0, atol=1e-12)


@pytest.mark.parametrize("mass", ["consistent", "lumped"])
def test_pure_diffusion_conserves_mass(square, mass):
    # unit diffusivity: the consistent mass matrix over- and undershoots when
    # diffusion is weak relative to h^2 / tau, which would trip the bound checks
    p = ModelParams(**ZERO_RATES, d_ref=1.0)
    solver = InvasionSolver(square, p, mass=mass)
    st0 = state_from_functions(square, lambda x: 0.5 + 0.4 * x[:, 0],
                               lambda x: 1 + 0.5 * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]))
    res = integrate(solver, st0, 1e-2, 1.0)
    m = np.array([r["cs_mass"] for r in res.metrics])
    assert np.abs(m - m[0]).max() <= 1e-12 * m[0]
    assert res.snapshots[-1].cs.std() < st0.cs.std()  # diffusion smooths


def test_full_suitability_freezes_matrix(square):
    p = ModelParams(delta_s=0, suitability_enabled=True)
    st0 = initial_preset("ellipse2d", square)
    st0.s[:] = 1.0
    res = integrate(InvasionSolver(square, p), st0, 1e-2, 0.5)
    fin = res.snapshots[-1]
    assert np.array_equal(fin.phi, st0.phi)
    assert np.array_equal(fin.s, st0.s)
    assert fin.cs.max() > 0 and fin.w.max() > 0  # MMPs are still produced


def test_disabled_suitability_leaves_s_untouched(square):
    st0 = initial_preset("ellipse2d", square)
    res = integrate(InvasionSolver(square, ModelParams()), st0, 1e-2, 0.2)
    assert not res.snapshots[-1].s.any()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), tau=st.sampled_from([1e-3, 5e-3, 1e-2]),
       mu=st.tuples(st.sampled_from([0.0, 1.0]), st.sampled_from([0.0, 1.0])))
def test_one_step_monotonicity_and_bounds(seed, tau, mu):
    m = generate_rectangle([[0, 1], [0, 1]], 5, 5)
    rng = np.random.default_rng(seed)
    n = m.n_vertices
    p = ModelParams(mu_b=mu[0], mu_s=mu[1], suitability_enabled=True)
    st0 = FieldState(rng.uniform(0.01, 1, n), rng.uniform(0, 40, n), rng.uniform(0, 50, n), rng.uniform(0, 1, n))
    solver = InvasionSolver(m, p)
    st1 = solver.step(solver.start(st0), tau)  # strict: raises on any bound violation
    assert (st1.phi <= st0.phi).all()
    assert (st1.s <= st0.s).all()
    assert st1.phi.min() > 0


def test_min_phi_stays_positive_on_coarse_run():
    m = generate_rectangle([[-1, 1], [-1, 1]], 31, 31)  # odd: no vertex at the origin
    res = integrate(InvasionSolver(m, ModelParams()), initial_preset("ellipse2d", m), 1e-2, 2.0)
    phi_min = [r["phi_min"] for r in res.metrics]
    assert min(phi_min) > 0
    inv = [r["invaded_fraction"] for r in res.metrics]
    assert all(b >= a - 1e-15 for a, b in zip(inv, inv[1:]))


def test_strict_mode_raises_and_permissive_clips(square):
    bad = state_from_functions(square, 1.0, 0.0, 0.0, 0.0)
    bad.phi[3] = 1.5
    with pytest.raises(InvariantError, match=r"phi\[3\]"):
        InvasionSolver(square, ModelParams()).start(bad)
    with pytest.warns(RuntimeWarning, match=r"phi\[3\]"):
        fixed = InvasionSolver(square, ModelParams(), strict=False).start(bad.copy())
    assert fixed.phi.max() == 1.0


def test_invalid_time_arguments(square):
    solver = InvasionSolver(square, ModelParams())
    st0 = initial_preset("ellipse2d", square)
    with pytest.raises(ValueError):
        solver.step(st0, 0.0)
    with pytest.raises(ValueError):
        integrate(solver, st0, 0.3, 1.0)
    with pytest.raises(ValueError):
        InvasionSolver(square, ModelParams(), mass="diagonal")


def test_metrics_rows_and_snapshots(square):
    solver = InvasionSolver(square, ModelParams())
    res = integrate(solver, initial_preset("ellipse2d", square), 1e-2, 0.1, snapshot_every=4,
                    snapshot_times=(0.05,))
    assert [round(s.t, 12) for s in res.snapshots] == [0.0, 0.04, 0.05, 0.08, 0.1]
    assert len(res.metrics) == 11
    assert tuple(res.metrics[0]) == METRIC_COLUMNS
    assert res.metrics[-1]["t"] == pytest.approx(0.1)


def test_with_rates():
    p = with_rates(ModelParams(), mu_b=0)
    assert p.mu_b == 0 and p.mu_s == 1
