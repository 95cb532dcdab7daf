import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iccbf_rl.config import ConfigError, CruiseParams, DockingParams, InspectionParams
from iccbf_rl.dynamics import (DivergenceError, InputSet, PropagatorConfig, SingularStateError, as_state,
                               cruise_model, docking_model, eval_drift, eval_input_matrix, inspection_model,
                               model_for, propagate_path, propagate_zoh)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def _ref_docking_drift(x, p: DockingParams):
    r, mu, n = p.orbit_radius, p.mu, math.sqrt(p.mu / p.orbit_radius**3)
    px, py, vx, vy = x[:4]
    rc3 = ((r + px) ** 2 + py**2) ** 1.5
    return np.array([
        vx,
        vy,
        n * n * px + 2 * n * vy + mu / r**2 - mu * (r + px) / rc3,
        n * n * py - 2 * n * vx - mu * py / rc3,
        math.radians(p.omega_deg),
    ])


def _ref_rk4(f, x, T, steps):
    h = T / steps
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


# -- input sets ----------------------------------------------------------------


def test_input_set_rejects_bad_bounds():
    with pytest.raises(ValueError):
        InputSet.ball(0.0)
    with pytest.raises(ValueError):
        InputSet.box(1.0, -1.0)
    with pytest.raises(ValueError):
        InputSet("disk", (1.0,))


def test_input_set_membership():
    ball, box = InputSet.ball(2.0), InputSet.box(1.0, 3.0)
    assert ball.contains([1.2, 1.6]) and not ball.contains([1.5, 1.5])
    assert box.contains([-1.0, 3.0]) and not box.contains([1.01, 0.0])


@given(st.lists(finite, min_size=1, max_size=3))
def test_projection_is_admissible_and_idempotent(v):
    for s in (InputSet.ball(0.7), InputSet.box(0.25)):
        p = s.project(v)
        assert s.contains(p)
        np.testing.assert_allclose(s.project(p), p, atol=1e-15)


@given(st.lists(finite, min_size=1, max_size=3))
def test_support_attained_on_boundary(v):
    v = np.asarray(v)
    ball = InputSet.ball(0.7)
    assert math.isclose(ball.support(v), 0.7 * np.linalg.norm(v), rel_tol=1e-12, abs_tol=1e-12)
    box = InputSet.box(0.25)
    assert math.isclose(box.support(v), float(np.abs(v).sum() * 0.25), rel_tol=1e-12, abs_tol=1e-12)
    # sup over vertices of the box equals the closed form
    u_star = 0.25 * np.sign(v)
    assert math.isclose(float(v @ u_star), box.support(v), rel_tol=1e-12, abs_tol=1e-12)


# -- drift and input matrices ---------------------------------------------------


def test_cruise_lead_speed_match(models):
    m = models["cruise"]
    f = eval_drift(m, [80.0, CruiseParams().v0])
    assert f[0] == 0.0


def test_docking_rotation_rate(models):
    f = eval_drift(models["docking"], [500.0, 0.0, 0.0, 0.0, 0.0])
    assert f[4] == pytest.approx(0.6 * math.pi / 180, rel=1e-15)


def test_inspection_planar_symmetry(models):
    f = eval_drift(models["inspection"], [100.0, -40.0, 0.0, 0.1, 0.2, 0.0])
    assert f[5] == 0.0


def test_input_matrices(models):
    np.testing.assert_array_equal(eval_input_matrix(models["cruise"], [1.0, 2.0]), [[0.0], [9.81]])
    g = eval_input_matrix(models["docking"], [500.0, 3.0, 0.0, 0.0, 0.1])
    assert g.shape == (5, 2)
    expect = np.zeros((5, 2))
    expect[2, 0] = expect[3, 1] = 1 / 1000
    np.testing.assert_array_equal(g, expect)
    gi = eval_input_matrix(models["inspection"], [100.0, 0, 0, 0, 0, 0])
    assert gi.shape == (6, 3) and np.count_nonzero(gi) == 3
    np.testing.assert_allclose(gi[3:], np.eye(3) / 50)


def test_docking_drift_matches_reference(models, rng):
    p = DockingParams()
    for _ in range(20):
        x = rng.uniform([-600, -600, -2, -2, -np.pi], [600, 600, 2, 2, np.pi])
        np.testing.assert_allclose(eval_drift(models["docking"], x), _ref_docking_drift(x, p), rtol=1e-12, atol=1e-15)


def test_singular_state(models):
    r = DockingParams().orbit_radius
    with pytest.raises(SingularStateError):
        eval_drift(models["docking"], [-r, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(SingularStateError):
        eval_drift(models["inspection"], [-r, 0.0, 0.0, 0.0, 0.0, 0.0])


def test_state_validation(models):
    with pytest.raises(ValueError):
        as_state([1.0, 2.0, 3.0], models["cruise"])
    with pytest.raises(ValueError):
        as_state([1.0, np.nan], models["cruise"])


def test_model_for_and_param_validation():
    assert model_for("docking", DockingParams()).n == 5
    with pytest.raises(ValueError):
        model_for("orbit", DockingParams())
    with pytest.raises(ConfigError):
        cruise_model(CruiseParams(mass=-1.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(-200, 200), st.floats(-200, 200), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(-200, 200), st.floats(-200, 200))
def test_control_affinity(px, py, vx, vy, ux, uy):
    m = docking_model()
    x = np.array([500 + px, py, vx, vy, 0.3])
    u, u2 = np.array([ux, uy]), np.array([uy, -ux])
    d = m.xdot(x, u) - m.xdot(x, u2)
    np.testing.assert_allclose(d, eval_input_matrix(m, x) @ (u - u2), atol=1e-15)


def test_planar_embedding(rng):
    dp = DockingParams()
    ip = InspectionParams(mass=dp.mass, u_max=dp.u_max)
    dock, insp = docking_model(dp), inspection_model(ip)
    for _ in range(20):
        px, py, vx, vy = rng.uniform(-500, 500), rng.uniform(-500, 500), rng.normal(), rng.normal()
        u = rng.uniform(-100, 100, 2)
        fd = np.asarray(dock.xdot(np.array([px, py, vx, vy, 0.0]), u))
        fi = np.asarray(insp.xdot(np.array([px, py, 0.0, vx, vy, 0.0]), np.array([u[0], u[1], 0.0])))
        np.testing.assert_allclose(fi[[0, 1, 3, 4]], fd[:4], rtol=1e-12, atol=1e-15)
        assert fi[2] == 0.0 and fi[5] == 0.0


# -- propagation -------------------------------------------------------------------


def test_zoh_zero_drag_keeps_gap():
    m = cruise_model(CruiseParams(f0=0.0, f1=0.0, f2=0.0))
    x1 = propagate_zoh(m, [80.0, CruiseParams().v0], [0.0], 0.1)
    assert x1[0] == pytest.approx(80.0, abs=1e-12)


def test_zoh_richardson_cruise(models):
    m = models["cruise"]
    x0, u = np.array([100.0, 20.0]), np.array([-0.2])
    a = propagate_zoh(m, x0, u, 0.1, PropagatorConfig(10))
    b = propagate_zoh(m, x0, u, 0.1, PropagatorConfig(20))
    assert np.max(np.abs(a - b) / np.abs(b)) < 1e-8


def test_zoh_docking_ballistic_reference(models):
    p = DockingParams()
    x0 = np.array([500.0, 0.0, 0.0, 0.0, 0.0])
    got = propagate_zoh(models["docking"], x0, [0.0, 0.0], p.dt)
    ref = _ref_rk4(lambda x: _ref_docking_drift(x, p), x0, p.dt, 1000)
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-12)


def test_zoh_deterministic(models):
    m = models["docking"]
    x0, u = np.array([400.0, 30.0, -0.5, 0.1, 0.2]), np.array([100.0, -50.0])
    a = propagate_zoh(m, x0, u, 0.5)
    b = propagate_zoh(m, x0, u, 0.5)
    assert a.tobytes() == b.tobytes()


def test_zoh_rejects_inadmissible_input(models):
    with pytest.raises(ValueError):
        propagate_zoh(models["cruise"], [100.0, 20.0], [0.3], 0.1)
    with pytest.raises(ValueError):
        propagate_zoh(models["docking"], [500.0, 0, 0, 0, 0], [200.0, 200.0], 0.5)
    with pytest.raises(ValueError):
        propagate_zoh(models["cruise"], [100.0, 20.0], [0.1], 0.0)
    # boundary within the 1e-9 relative tolerance is accepted
    propagate_zoh(models["cruise"], [100.0, 20.0], [0.25 * (1 + 5e-10)], 0.1)


def test_zoh_divergence():
    m = cruise_model()
    with pytest.raises(DivergenceError):
        propagate_zoh(m, [0.0, 1e200], [0.0], 0.1)


def test_path_endpoints_match_zoh(models):
    m = models["cruise"]
    path = propagate_path(m, [100.0, 20.0], [0.1], 0.1, 10)
    assert path.shape == (11, 2)
    np.testing.assert_allclose(path[-1], propagate_zoh(m, [100.0, 20.0], [0.1], 0.1), rtol=1e-14)


def test_propagator_config_validation():
    with pytest.raises(ValueError):
        PropagatorConfig(0)
