import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iccbf_rl.config import Config, DockingParams, InspectionParams
from iccbf_rl.dynamics import docking_model, inspection_model, propagate_path
from iccbf_rl.env import (BarrierHead, BenchmarkEnv, EnvConfig, InspectionEnv, dispatch, env_factory, make_env,
                          observation_bounds, residual_barrier_field, scale_observation)
from iccbf_rl.ppo import GaussianPolicy
from iccbf_rl.scenarios import mean_h0
from oracles import central_fd, grad_close


def random_head_policy(env, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    pol = GaussianPolicy(env.obs_dim, env.act_dim, (64, 64, 64, 64), 0.2, rng)
    pol.set_flat(pol.get_flat() + scale * rng.normal(size=pol.n_params) / 8)
    return pol


# -- observation scaling ----------------------------------------------------------------


def test_scale_observation_examples():
    lo, hi = np.array([0.0, -2.0]), np.array([10.0, 2.0])
    np.testing.assert_array_equal(scale_observation(lo, lo, hi), [-1.0, -1.0])
    np.testing.assert_array_equal(scale_observation(hi, lo, hi), [1.0, 1.0])
    np.testing.assert_array_equal(scale_observation(0.5 * (lo + hi), lo, hi), [0.0, 0.0])
    np.testing.assert_array_equal(scale_observation(np.array([50.0, -9.0]), lo, hi), [1.0, -1.0])


def test_zero_width_bounds_map_to_zero():
    assert scale_observation(np.array([3.0]), np.array([1.0]), np.array([1.0]))[0] == 0.0


@pytest.mark.parametrize("scenario", ["cruise", "docking", "inspection"])
@pytest.mark.parametrize("stage", [1, 2])
def test_observation_bounds_ordered(cfg, scenario, stage):
    lo, hi = observation_bounds(cfg, scenario, stage)
    assert lo.shape == hi.shape and np.all(lo <= hi)


def test_env_config_validation():
    with pytest.raises(ValueError):
        EnvConfig("orbit")
    with pytest.raises(ValueError):
        EnvConfig("cruise", stage=3)
    assert EnvConfig("cruise", 2).tag == "E" and EnvConfig("cruise", 1).tag == "D"
    with pytest.raises(ValueError):
        BenchmarkEnv(Config(), EnvConfig("inspection"))
    with pytest.raises(ValueError):
        InspectionEnv(Config(), EnvConfig("cruise"))


# -- stage 1 ------------------------------------------------------------------------------


def test_spaces(cruise_env, docking_env, cruise_env2, inspection_env):
    assert (cruise_env.obs_dim, cruise_env.act_dim) == (2, 2)
    assert (docking_env.obs_dim, docking_env.act_dim) == (5, 2)
    assert (cruise_env2.obs_dim, cruise_env2.act_dim) == (6, 3)
    assert (inspection_env.obs_dim, inspection_env.act_dim) == (6, 8)


def test_quiet_state_zero_effort(cruise_env):
    cruise_env.reset([120.0, 24.0])
    a_raw = 0.0
    res = cruise_env.step([a_raw, a_raw])
    assert np.all(np.abs(res.info["u"]) < 1e-9)
    assert res.reward == pytest.approx(0.0, abs=1e-8)
    assert not res.info["violation"]


def test_one_step_from_grid_state(cruise_env):
    cruise_env.reset([100.0, 20.0])
    res = cruise_env.step_with_gains(1.0, 1.0)
    assert res.info["h0"] >= 0 and not res.info["violation"]
    assert res.info["h0"] == pytest.approx(cruise_env.h0(res.info["x"]))


def test_decode_gains_bounds(cruise_env):
    assert cruise_env.decode_gains([0.0, 0.0]) == pytest.approx((1.0, 1.0))
    lo, hi = cruise_env.decode_gains([-50.0, 50.0])
    assert lo == pytest.approx(0.1) and hi == pytest.approx(10.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_reward_nonpositive_and_flag_consistent(seed, raw):
    env = make_env(Config(), EnvConfig("cruise", stage=1))
    env.seed(seed)
    env.reset()
    for _ in range(5):
        res = env.step(raw)
        assert res.reward <= 0.0 and math.isfinite(res.reward)
        assert res.info["violation"] == (res.info["h0"] < 0)
        if res.reward == 0.0:
            assert not res.info["violation"] and np.all(res.info["u"] == 0)


def test_cruise_episode_length(cruise_env):
    cruise_env.reset([100.0, 10.0])
    n, done = 0, False
    while not done:
        res = cruise_env.step([0.0, 0.0])
        n += 1
        done = res.done
    assert n == 200 and res.info["truncated"]


def test_docking_episode_length(docking_env):
    docking_env.reset(docking_env.grid.subset("D")[10])
    n, done = 0, False
    while not done:
        res = docking_env.step([0.0, 0.0])
        n += 1
        done = res.done
    assert n <= 100


def test_docking_early_stop(docking_env):
    rho = DockingParams().rho
    assert docking_env.docking_early_stop(np.array([rho, 0.0, 0.0, 0.0, 0.0]))
    assert not docking_env.docking_early_stop(np.array([400.0, 0.0, 0.0, 0.0, 0.0]))


def test_reset_samples_initial_set(cruise_env):
    cruise_env.seed(4)
    D = {tuple(x) for x in cruise_env.grid.subset("D")}
    for _ in range(10):
        cruise_env.reset()
        assert tuple(cruise_env.x) in D


def test_dispatch(cruise_env):
    ch = cruise_env.chain
    for x, tag in zip(cruise_env.grid.states, cruise_env.grid.tags):
        assert dispatch(ch, x) == {"D": "stage1", "E": "stage2", "unsafe": "unsafe"}[tag]


# -- stage 2 -------------------------------------------------------------------------------


def test_hbar_is_mean_over_e_grid(cruise_env2):
    assert cruise_env2.hbar == mean_h0(cruise_env2.grid, cruise_env2.h0, "E")


def test_stage2_observation_layout(cruise_env2):
    x = np.array([60.0, 10.0])
    s = cruise_env2.observe(x)
    assert s.shape == (6,) and np.all(np.abs(s) <= 1)
    lo, hi = cruise_env2.obs_lo2, cruise_env2.obs_hi2
    lf, lg = cruise_env2.h0.lie_fn(cruise_env2.model)(x)[2:]
    raw = np.concatenate([x, lg, [lf, cruise_env2.h0(x), cruise_env2.clf.field(x)]])
    np.testing.assert_allclose(s, scale_observation(raw, lo, hi), atol=1e-14)


def test_stage2_reduces_to_h0_stage1(cfg):
    env2 = BenchmarkEnv(cfg, EnvConfig("cruise", stage=2))
    env1 = BenchmarkEnv(cfg, EnvConfig("cruise", stage=1, h0_direct=True))
    env2.set_barrier_head(BarrierHead(constant=0.0))
    x0 = env2.grid.subset("E")[0]
    env1.reset(x0)
    env2.reset(x0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = rng.normal(size=2)
        r1 = env1.step(g)
        r2 = env2.step(np.concatenate([[0.0], g]))
        assert r1.info["x"].tobytes() == r2.info["x"].tobytes()
        assert r1.info["u"].tobytes() == r2.info["u"].tobytes()
        assert r1.reward == r2.reward


@pytest.mark.parametrize("scenario", ["cruise", "docking"])
def test_composite_gradient_fd(cfg, scenario):
    env = BenchmarkEnv(cfg, EnvConfig(scenario, stage=2))
    env.set_policy_snapshot(random_head_policy(env))
    field = residual_barrier_field(env)
    rng = np.random.default_rng(1)
    for _ in range(30):
        if scenario == "cruise":
            x = np.array([rng.uniform(5, 145), rng.uniform(1, 23)])
        else:
            r, th = rng.uniform(50, 500), rng.uniform(-0.15, 0.15)
            x = np.array([r * math.cos(th), r * math.sin(th), *rng.normal(0, 0.05, 2), rng.uniform(0.01, 0.4)])
        assert grad_close(field.gradient(x), central_fd(field.value, x)), x


def test_policy_snapshot_only_for_stage2(cruise_env):
    head = cruise_env.head
    cruise_env.set_policy_snapshot(random_head_policy(cruise_env))
    assert cruise_env.head is head


def test_env_factory_shares_grid(cfg):
    fac = env_factory(cfg, EnvConfig("cruise", stage=1))
    a, b = fac(0), fac(1)
    assert a.grid is b.grid


# -- inspection ------------------------------------------------------------------------------


def test_inspection_durations(inspection_env):
    t_b, t_c = inspection_env.durations(-1.0, 1.0)
    assert t_b == pytest.approx(3.0)
    assert t_c == pytest.approx(3 * 3600.0)
    t_b, t_c = inspection_env.durations(1.0, -1.0)
    assert t_b == pytest.approx(90.0) and t_c == pytest.approx(3600.0)


def test_inspection_zero_lambda(inspection_env):
    np.testing.assert_array_equal(inspection_env.enhancement([1.0, 2.0, 3.0], -1e9), np.zeros(3))
    u = inspection_env.enhancement([0.0, 3.0, 4.0], 1e9)
    np.testing.assert_allclose(u, [0.0, 0.03, 0.04])


def test_inspection_pure_filter_step(cfg):
    env = InspectionEnv(cfg, EnvConfig("inspection", stage=1))
    env.reset()
    res = env.step_explicit((1.0, 1.0), -1.0, -1.0, np.zeros(3))
    assert np.linalg.norm(res.info["u"]) <= 0.05 * (1 + 1e-9)
    assert res.info["t_b"] == pytest.approx(3.0) and res.info["t_c"] == pytest.approx(3600.0)
    assert res.info["score_increment"] >= 0
    assert not res.info["violation"]


def test_inspection_mission_ends(cfg):
    env = InspectionEnv(cfg, EnvConfig("inspection", stage=1))
    env.reset()
    done, n = False, 0
    while not done:
        res = env.step(np.array([0, 0, 1.0, 5.0, 1, 0, 0, -20.0]))
        done, n = res.done, n + 1
    assert env.t == pytest.approx(InspectionParams().mission_time)
    assert n >= 16


def test_inspection_bonus_sign(cfg):
    a = InspectionEnv(cfg, EnvConfig("inspection"))
    b = InspectionEnv(cfg, EnvConfig("inspection", literal_bonus_sign=True))
    x0 = a.initial_states[0]
    a.reset(x0)
    b.reset(x0)
    ra = a.step_explicit((1.0, 1.0), 0.0, 0.0, np.zeros(3))
    rb = b.step_explicit((1.0, 1.0), 0.0, 0.0, np.zeros(3))
    assert ra.reward == pytest.approx(-rb.reward)
    assert ra.reward > 0


def test_coast_planar_matches_docking():
    ip = InspectionParams()
    insp = inspection_model(ip)
    dock = docking_model(DockingParams(orbit_radius=ip.orbit_radius, mu=ip.mu))
    x = np.array([120.0, -30.0, 0.0, 0.01, -0.2, 0.0])
    pi = propagate_path(insp, x, np.zeros(3), 3600.0, 60)
    pd = propagate_path(dock, np.array([120.0, -30.0, 0.01, -0.2, 0.0]), np.zeros(2), 3600.0, 60)
    np.testing.assert_allclose(pi[:, [0, 1, 3, 4]], pd[:, :4], rtol=1e-12, atol=1e-12)
    assert np.all(pi[:, [2, 5]] == 0.0)


def test_inspection_stage2_step(cfg):
    env = InspectionEnv(cfg, EnvConfig("inspection", stage=2))
    assert env.obs_dim == 12
    env.reset()
    res = env.step(np.zeros(8))
    assert np.isfinite(res.reward) and res.obs.shape == (12,)
