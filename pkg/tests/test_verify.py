import numpy as np
import pytest

from invasim.homog import EffectiveTensor
from invasim.invasion import FieldState, ModelParams
from invasim.verify import (OracleError, check_bounds, dilute_limit_check, forward_euler, ode_oracle,
                            run_ode_suite, run_suites)


def state(n=5, **kw):
    base = dict(phi=np.full(n, 0.5), cs=np.zeros(n), w=np.zeros(n), s=np.zeros(n))
    base.update(kw)
    return FieldState(**base)


def test_all_rates_zero_gives_constant_trajectory():
    p = ModelParams(kappa_s=0, kappa_b=0, mu_s=0, mu_b=0, beta_s=0, beta_b=0, delta_s=0)
    tr = ode_oracle(p, (0.3, 2.0, 1.0, 0.4), 5.0, n_out=5)
    assert np.array_equal(tr.y, np.tile([0.3, 2.0, 1.0, 0.4], (6, 1)))


def test_exponential_decay_closed_form():
    p = ModelParams(kappa_s=0, kappa_b=0, mu_s=0, mu_b=0)
    tr = ode_oracle(p, (0.5, 1.0, 1.0, 0.0), 5.0, n_out=10)
    assert np.allclose(tr.y[:, 1], np.exp(-0.1 * tr.t), rtol=1e-8, atol=0)
    assert np.allclose(tr.y[:, 2], np.exp(-0.1 * tr.t), rtol=1e-8, atol=0)


def test_fixed_point():
    tr = ode_oracle(ModelParams(), (1.0, 0.0, 0.0, 0.0), 5.0)
    assert np.array_equal(tr.at_end(), [1.0, 0.0, 0.0, 0.0])


def test_oracle_self_consistency():
    p = ModelParams(suitability_enabled=True)
    a = ode_oracle(p, (0.9, 0.1, 0.2, 0.7), 5.0).at_end()
    b = ode_oracle(p, (0.9, 0.1, 0.2, 0.7), 5.0, n0=64).at_end()
    assert np.abs(a - b).max() < 1e-8


def test_oracle_reports_nonconvergence():
    with pytest.raises(OracleError):
        ode_oracle(ModelParams(), (0.5, 1.0, 1.0, 0.0), 5.0, rtol=1e-30, max_halvings=2)


def test_forward_euler_is_first_order():
    p = ModelParams(suitability_enabled=True)
    y0 = (0.8, 0.5, 0.5, 0.6)
    ref = ode_oracle(p, y0, 1.0).at_end()
    e1 = np.abs(forward_euler(p, y0, 1.0, 1e-2) - ref).max()
    e2 = np.abs(forward_euler(p, y0, 1.0, 5e-3) - ref).max()
    assert e1 / e2 == pytest.approx(2.0, abs=0.1)


def test_bounds_pass_and_fail():
    p = ModelParams()
    assert check_bounds(state(), p).passed
    assert check_bounds(state(w=np.full(5, 50.0)), p).passed  # M_b = 50 exactly
    phi = np.full(5, 0.5)
    phi[2] = 1 + 1e-3
    rep = check_bounds(state(phi=phi), p)
    assert not rep.passed
    assert "phi[2]" in rep.detail
    assert rep.max_abs == pytest.approx(1e-3 - 1e-8)
    assert not check_bounds(state(cs=np.full(5, -1e-3)), p).passed
    rep = check_bounds(state(phi=np.zeros(5)), p, require_positive_phi=True)
    assert not rep.passed and "positive" in rep.detail


def test_dilute_limit_check():
    t = EffectiveTensor(np.eye(2) * 2.0, 1.0, 2.0)
    rep = dilute_limit_check(t, 0.0, 2)
    assert rep.passed and rep.max_abs == 0.0
    with pytest.raises(ValueError):
        dilute_limit_check(t, 0.2, 2)
    bad = EffectiveTensor(np.eye(2) * 0.9, 0.98, 1.0)
    assert not dilute_limit_check(bad, 0.02, 2).passed


def test_suites():
    reps = run_ode_suite()
    assert all(r.passed for r in reps), [r.line() for r in reps]
    assert all(r.line().startswith("PASS") for r in reps)
    with pytest.raises(ValueError):
        run_suites(["bogus"])
