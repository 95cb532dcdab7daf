import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iccbf_rl.barrier import chain_membership, docking_h0
from iccbf_rl.config import ConfigError, DockingParams, InspectionParams
from iccbf_rl.scenarios import (cruise_grid, distance_weight, docking_initials, gamma_angle, inspection_initials,
                                inspection_score_increment, mean_h0, score_integrand, split_D_E,
                                sun_direction_lvlh)


def test_cruise_grid_shape():
    g = cruise_grid()
    assert len(g) == 325
    assert set(g.states[:, 0]) == set(np.arange(0.0, 121.0, 10.0))
    assert set(g.states[:, 1]) == set(np.arange(0.0, 25.0))


def test_split_partition(cruise_env):
    g = cruise_env.grid
    c = g.counts()
    assert sum(c.values()) == 325
    assert g.tags[list(map(tuple, g.states)).index((0.0, 24.0))] == "unsafe"
    for x, t in zip(g.states, g.tags):
        m = chain_membership(cruise_env.chain, x)
        assert t == ("D" if m.in_Cstar else "E" if m.in_S else "unsafe")


def test_untagged_grid_subset_raises():
    with pytest.raises(ValueError):
        cruise_grid().subset("D")


def test_grid_csv(tmp_path, cruise_env):
    path = tmp_path / "grid.csv"
    cruise_env.grid.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "d,v,tag" and len(lines) == 326


def test_docking_initials():
    p = DockingParams()
    g = docking_initials(p)
    assert len(g) == 100
    assert np.all(g.states[:, 0] == p.standoff) and np.all(g.states[:, 2:] == 0.0)
    h = docking_h0(p)
    vals = np.array([h(x) for x in g.states])
    assert np.all(vals >= -1e-12)
    # end points sit on the cone boundary, the middle on the axis
    assert abs(vals[0]) < 1e-12 and abs(vals[-1]) < 1e-12
    assert math.atan2(g.states[0, 1], g.states[0, 0] - p.rho) == pytest.approx(-p.gamma)
    assert math.atan2(g.states[99, 1], g.states[99, 0] - p.rho) == pytest.approx(p.gamma)


def test_docking_initials_literal_offset_leaves_cone():
    p = DockingParams()
    g = docking_initials(p, literal_offset=True)
    h = docking_h0(p)
    assert min(h(x) for x in g.states) < 0


def test_docking_split(docking_env):
    c = docking_env.grid.counts()
    assert c["D"] + c["E"] == 100 and c["unsafe"] == 0


def test_inspection_initials():
    p = InspectionParams()
    g = inspection_initials([50.0, 300.0], p)
    np.testing.assert_allclose(g.states[0], [50.0, 0, 0, 0, -2 * p.mean_motion * 50.0, 0.431])
    assert len(inspection_initials(None, p)) == 100


def test_mean_h0(cruise_env):
    g = cruise_env.grid
    E = g.subset("E")
    assert mean_h0(g, cruise_env.h0, "E") == pytest.approx(np.mean(E[:, 0] - 1.8 * E[:, 1]))


def test_param_ordering_validated():
    with pytest.raises(ConfigError):
        InspectionParams(r_min=10.0).validate()
    with pytest.raises(ConfigError):
        InspectionParams(dv_min=0.1).validate()


def test_gamma_angle_examples():
    p = InspectionParams()
    s = sun_direction_lvlh(0.0, p)
    assert gamma_angle(np.concatenate([100 * s, np.zeros(3)]), 0.0, p) == pytest.approx(0.0, abs=1e-7)
    assert gamma_angle(np.concatenate([-100 * s, np.zeros(3)]), 0.0, p) == pytest.approx(math.pi)
    perp = np.array([-s[1], s[0], 0.0])
    assert gamma_angle(np.concatenate([100 * perp, np.zeros(3)]), 0.0, p) == pytest.approx(math.pi / 2)


def test_sun_direction_rotates_at_mean_motion():
    p = InspectionParams()
    T = 2 * math.pi / p.mean_motion
    np.testing.assert_allclose(sun_direction_lvlh(T, p), sun_direction_lvlh(0.0, p), atol=1e-12)
    np.testing.assert_allclose(sun_direction_lvlh(T / 4, p), [0.0, -1.0, 0.0], atol=1e-12)


def test_distance_weight_examples():
    assert distance_weight(100.0) == 1.0
    assert distance_weight(25.0) == 0.5
    assert distance_weight(600.0) == 0.125


@given(st.floats(1e-3, 1e4))
def test_distance_weight_bounded(r):
    w = float(distance_weight(r))
    assert 0 < w <= 1


def test_score_trivial_cases():
    p = InspectionParams()
    t = np.linspace(0.0, 500.0, 11)
    anti = np.array([np.concatenate([-100 * sun_direction_lvlh(ti, p), np.zeros(3)]) for ti in t])
    assert inspection_score_increment(t, anti, p) == pytest.approx(0.0, abs=1e-12)
    sunward = np.array([np.concatenate([100 * sun_direction_lvlh(ti, p), np.zeros(3)]) for ti in t])
    assert abs(inspection_score_increment(t, sunward, p) - p.omega_gamma * 500.0) <= 1e-12 * 500
    assert inspection_score_increment(t[:1], sunward[:1], p) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_score_nonnegative(seed):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 1e4, 20))
    x = np.column_stack([rng.uniform(-800, 800, (20, 3)), np.zeros((20, 3))])
    assert inspection_score_increment(t, x) >= 0
    assert np.all(score_integrand(t, x) >= 0)
