"""RL environments wrapping the safety-filter QPs.

``BenchmarkEnv`` runs the cruise and docking problems (stage 1: learned
class-K gains on b2; stage 2: learned residual on h0). ``InspectionEnv`` runs
the burn/coast inspection mission. Raw policy outputs are decoded here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np

from .barrier import (BarrierChain, ScalarField, chain_from_params, chain_membership, cruise_clf, cruise_h0,
                      docking_clf, docking_h0, kiz_h0, koz_h0)
from .config import Config
from .dynamics import ControlAffineModel, model_for, propagate_path, propagate_zoh
from .neural import BoundedActionMap, Mlp, squash
from .qp import Solution, inspection1_from_lie, solve, stage1_from_lie
from .scenarios import (InitialGrid, cruise_grid, docking_initials, inspection_initials, inspection_score_increment,
                        mean_h0, split_D_E)


# --------------------------------------------------------------------------
# observation scaling


def scale_observation(S, S_min, S_max, xp=np):
    """2 (S - S_min)/(S_max - S_min) - 1 clamped to [-1, 1]; zero-width bounds map to 0."""
    S_min = xp.asarray(S_min, dtype=float)
    S_max = xp.asarray(S_max, dtype=float)
    width = S_max - S_min
    ok = width > 0
    safe = xp.where(ok, width, 1.0)
    z = 2.0 * (S - S_min) / safe - 1.0
    return xp.where(ok, xp.clip(z, -1.0, 1.0), 0.0)


def _state_bounds(cfg: Config, scenario: str) -> tuple[np.ndarray, np.ndarray]:
    if scenario == "cruise":
        return np.array([0.0, 0.0]), np.array([150.0, cfg.cruise.v_max + 1.0])
    if scenario == "docking":
        d = cfg.docking
        lat = d.standoff * math.tan(d.gamma) * 1.2
        return (np.array([0.0, -lat, -15.0, -15.0, 0.0]),
                np.array([d.standoff * 1.1, lat, 15.0, 15.0, d.omega * d.t_final]))
    if scenario == "inspection":
        r = cfg.inspection.r_kiz
        return np.array([-r, -r, -r, -2.0, -2.0, -2.0]), np.array([r, r, r, 2.0, 2.0, 2.0])
    raise ValueError(f"unknown scenario {scenario!r}")


def observation_bounds(cfg: Config, scenario: str, stage: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed S_min / S_max per scenario and stage."""
    lo, hi = _state_bounds(cfg, scenario)
    if stage == 1:
        return lo, hi
    if scenario == "cruise":
        c = cfg.cruise
        lg = -c.slope * c.g0  # constant, so the component scales to 0
        ext_lo = [lg, -11.0, -c.slope * (c.v_max + 1.0), 0.0]
        ext_hi = [lg, 15.0, 150.0, (c.v_max + 1.0) ** 2]
    elif scenario == "docking":
        ext_lo = [0.0, 0.0, -1.0, -2.0, 0.0]  # Lg h0 = 0 identically
        ext_hi = [0.0, 0.0, 1.0, 1.0 - math.cos(cfg.docking.gamma), 2600.0]
    else:
        # combined zone barrier is constant 0.5 and there is no CLF: every extra component scales to 0
        ext_lo = [0.0, 0.0, 0.0, 0.0, 0.5, 0.0]
        ext_hi = [0.0, 0.0, 0.0, 0.0, 0.5, 0.0]
    return np.concatenate([lo, ext_lo]), np.concatenate([hi, ext_hi])


# --------------------------------------------------------------------------
# config and step records


@dataclass(frozen=True)
class EnvConfig:
    scenario: str
    stage: int = 1
    h0_direct: bool = False  # stage 1 on h0 instead of b2 (reduction checks)
    initial_tag: str | None = None  # None: "D" for stage 1, "E" for stage 2
    hbar: float | None = None  # None: mean of h0 over the initial distribution
    literal_bonus_sign: bool = False  # inspection: subtract c_i C_gamma as written
    gain_log_scale: bool = True

    def __post_init__(self):
        if self.scenario not in ("cruise", "docking", "inspection"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")

    @property
    def tag(self) -> str:
        return self.initial_tag or ("D" if self.stage == 1 else "E")


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)


def _qp_info(sol: Solution) -> dict[str, Any]:
    return {"qp_status": sol.status, "qp_iterations": sol.iterations, "qp_time": sol.solve_time,
            "qp_primal_residual": sol.primal_residual, "qp_dual_residual": sol.dual_residual}


class BarrierHead:
    """Residual barrier head m(S*) and dm/dS* taken from an actor network (output 0)."""

    def __init__(self, net: Mlp | None = None, index: int = 0, constant: float | None = None):
        self.net, self.index, self.constant = net, index, constant

    @classmethod
    def from_policy(cls, policy) -> "BarrierHead":
        return cls(policy.actor.copy(), 0)

    def __call__(self, obs) -> tuple[float, np.ndarray]:
        if self.net is None:
            return float(self.constant or 0.0), np.zeros(np.asarray(obs).size)
        out = self.net.forward(obs)
        return float(out[self.index]), self.net.input_gradient(obs, self.index)


# --------------------------------------------------------------------------
# benchmark environment


class BenchmarkEnv:
    """Cruise / docking environment; stage 1 acts on (alpha, beta), stage 2 on (h_RL, alpha, beta)."""

    def __init__(self, cfg: Config, env_cfg: EnvConfig, initial_states: np.ndarray | None = None,
                 grid: InitialGrid | None = None):
        if env_cfg.scenario not in ("cruise", "docking"):
            raise ValueError("BenchmarkEnv handles cruise and docking")
        self.cfg, self.env_cfg = cfg, env_cfg
        sc = env_cfg.scenario
        self.params = getattr(cfg, sc)
        self.model: ControlAffineModel = model_for(sc, self.params)
        self.h0 = cruise_h0(self.params) if sc == "cruise" else docking_h0(self.params)
        clf = cruise_clf(self.params) if sc == "cruise" else docking_clf(self.params)
        self.clf = clf
        self.chain: BarrierChain = chain_from_params(self.model, self.h0, cfg.chain_for(sc))
        self.h_stage1: ScalarField = self.h0 if env_cfg.h0_direct else self.chain.top
        self.dt, self.t_final = self.params.dt, self.params.t_final
        self.n_steps = int(round(self.t_final / self.dt))
        a = cfg.actions
        gains = ((a.alpha_min, a.alpha_max), (a.beta_min, a.beta_max))
        log = (env_cfg.gain_log_scale,) * 2
        self.gain_map = BoundedActionMap(gains, log)
        self.stage = env_cfg.stage
        self.obs_lo1, self.obs_hi1 = observation_bounds(cfg, sc, 1)
        self.obs_lo2, self.obs_hi2 = observation_bounds(cfg, sc, 2)

        if grid is None:
            grid = split_D_E(cruise_grid(self.params) if sc == "cruise" else docking_initials(self.params),
                             self.chain)
        self.grid = grid
        if initial_states is None:
            initial_states = grid.subset(env_cfg.tag)
            if len(initial_states) == 0:
                # no residual-set starts on this grid: fall back to every safe start
                initial_states = np.vstack([grid.subset("D"), grid.subset("E")])
        self.initial_states = np.asarray(initial_states, dtype=float)
        self.hbar = env_cfg.hbar if env_cfg.hbar is not None else mean_h0(grid, self.h0, "E")

        self._lie_h1 = self.h_stage1.lie_fn(self.model)
        self._lie_h0 = self.h0.lie_fn(self.model)
        self._lie_v = clf.field.lie_fn(self.model)
        self._obs2 = self._build_obs2()
        self.head = BarrierHead(constant=0.0)
        self.rng = np.random.default_rng(0)
        self.x = self.initial_states[0].copy()
        self.t, self.k = 0.0, 0

    # -- spaces -------------------------------------------------------------

    @property
    def obs_dim(self) -> int:
        return self.model.n if self.stage == 1 else self.model.n + self.model.m + 3

    @property
    def act_dim(self) -> int:
        return 2 if self.stage == 1 else 3

    def seed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def set_policy_snapshot(self, policy) -> None:
        if self.stage == 2:
            self.head = BarrierHead.from_policy(policy)

    def set_barrier_head(self, head: BarrierHead) -> None:
        self.head = head

    # -- observations -------------------------------------------------------

    def _build_obs2(self):
        model, h0, V = self.model, self.h0, self.clf.field
        lo, hi = self.obs_lo2, self.obs_hi2

        def raw(x):
            g0 = h0.grad_fn(x)
            return jnp.concatenate([x, g0 @ model.input_fn(x), jnp.stack([g0 @ model.drift_fn(x), h0.fn(x), V.fn(x)])])

        def scaled(x):
            return scale_observation(raw(x), lo, hi, xp=jnp)

        both = jax.jit(lambda x: (scaled(x), jax.jacobian(scaled)(x)))
        only = jax.jit(scaled)
        return raw, both, only

    def observe(self, x=None, stage: int | None = None) -> np.ndarray:
        x = self.x if x is None else np.asarray(x, dtype=float)
        stage = stage or self.stage
        if stage == 1:
            return scale_observation(x, self.obs_lo1, self.obs_hi1)
        return np.asarray(self._obs2[2](x))

    def observe_with_jacobian(self, x) -> tuple[np.ndarray, np.ndarray]:
        s, J = self._obs2[1](np.asarray(x, dtype=float))
        return np.asarray(s), np.asarray(J)

    # -- episode control ----------------------------------------------------

    def reset(self, x0=None) -> np.ndarray:
        if x0 is None:
            x0 = self.initial_states[self.rng.integers(len(self.initial_states))]
        self.x = self.model.check_state(np.array(x0, dtype=float))
        self.t, self.k = 0.0, 0
        return self.observe()

    def docking_early_stop(self, x) -> bool:
        return self.env_cfg.scenario == "docking" and self.clf.field(x) < self.params.dock_threshold

    def decode_gains(self, raw) -> tuple[float, float]:
        a, b = self.gain_map(np.asarray(raw, dtype=float))
        return float(a), float(b)

    def step(self, action) -> StepResult:
        return self.step_stage1(action) if self.stage == 1 else self.step_stage2(action)

    def step_stage1(self, action) -> StepResult:
        alpha, beta = self.decode_gains(np.asarray(action, dtype=float)[:2])
        h, _, lf, lg = self._lie_h1(self.x)
        return self._advance(h, lf, lg, alpha, beta, stage=1)

    def step_with_gains(self, alpha: float, beta: float, h_field: ScalarField | None = None) -> StepResult:
        """Stage-1 style step with explicit gains (fixed-gain ICCBF baseline)."""
        lie = self._lie_h1 if h_field is None else h_field.lie_fn(self.model)
        h, _, lf, lg = lie(self.x)
        return self._advance(h, lf, lg, alpha, beta, stage=1)

    def residual_terms(self, x, h_raw: float | None = None):
        """(h, Lf h, Lg h, grad of the residual) of h0 + hbar tanh(head) at x.

        ``h_raw`` overrides the head value (sampled action); the gradient
        always follows the head network.
        """
        h0v, g0, lf0, lg0 = self._lie_h0(x)
        s, J = self.observe_with_jacobian(x)
        m, dm = self.head(s)
        raw = m if h_raw is None else float(h_raw)
        r = math.tanh(raw)
        d_res = (1.0 - math.tanh(m) ** 2) * (J.T @ dm)
        f = np.asarray(self.model._jit["f"](x))
        gm = np.asarray(self.model._jit["g"](x))
        hb = self.hbar
        h = h0v + hb * r
        lf = lf0 + hb * float(d_res @ f)
        lg = lg0 + hb * (d_res @ gm)
        return h, lf, lg, g0 + hb * d_res

    def step_stage2(self, action) -> StepResult:
        action = np.asarray(action, dtype=float)
        alpha, beta = self.decode_gains(action[1:3])
        h, lf, lg, _ = self.residual_terms(self.x, action[0])
        return self._advance(h, lf, lg, alpha, beta, stage=2)

    def _advance(self, h, lf, lg, alpha, beta, stage: int) -> StepResult:
        qp = self.cfg.qp
        v, _, lfv, lgv = self._lie_v(self.x)
        p = stage1_from_lie(h, lf, lg, v, lfv, lgv, alpha, beta, qp.p1, qp.p2, self.model.input_set)
        sol = solve(p, qp.tol, qp.max_iter)
        u = self.model.input_set.project(sol.u)
        x_next = propagate_zoh(self.model, self.x, u, self.dt)
        self.x = x_next
        self.k += 1
        self.t = self.k * self.dt
        h0_next = self.h0(x_next)
        rw = self.cfg.reward
        unorm = float(np.linalg.norm(u))
        reward = -rw.c_h * max(0.0, -h0_next) - rw.c_u * unorm
        docked = self.docking_early_stop(x_next)
        timeout = self.k >= self.n_steps
        info = {
            "t": self.t, "x": x_next.copy(), "u": u.copy(), "h0": h0_next, "h": float(h), "V": float(v),
            "alpha": alpha, "beta": beta, "stage": stage, "violation": bool(h0_next < 0),
            "docked": bool(docked), "truncated": bool(timeout and not docked), "notes": list(p.notes),
            **_qp_info(sol),
        }
        obs = self.observe(x_next)
        return StepResult(obs, float(reward), bool(docked or timeout), info)


def residual_barrier_field(env: BenchmarkEnv) -> ScalarField:
    """The stage-2 composite h0 + hbar tanh(head(S*(x))) as a numpy ScalarField."""

    def value(x):
        x = np.asarray(x, dtype=float)
        m, _ = env.head(env.observe(x, stage=2))
        return env.h0(x) + env.hbar * math.tanh(m)

    def grad(x):
        return env.residual_terms(np.asarray(x, dtype=float))[3]

    return ScalarField("stage2_residual", value, grad_fn=grad, traceable=False)


def dispatch(chain: BarrierChain, x) -> str:
    """'stage1' inside C*, 'stage2' in S minus C*, 'unsafe' outside S."""
    mem = chain_membership(chain, x)
    if mem.in_Cstar:
        return "stage1"
    return "stage2" if mem.in_S else "unsafe"


# --------------------------------------------------------------------------
# inspection environment


class InspectionEnv:
    """Burn/coast inspection mission.

    Stage-1 action: [alpha1, alpha2, eta_b, eta_c, u_hat (3), lambda] (raw).
    Stage-2 action: [h_RL, alpha, eta_b, eta_c, u_hat (3), lambda] (raw).
    """

    act_dim = 8

    def __init__(self, cfg: Config, env_cfg: EnvConfig, initial_states: np.ndarray | None = None):
        if env_cfg.scenario != "inspection":
            raise ValueError("InspectionEnv handles the inspection scenario")
        self.cfg, self.env_cfg, self.stage = cfg, env_cfg, env_cfg.stage
        self.params = p = cfg.inspection
        self.model = model_for("inspection", p)
        self.koz, self.kiz = koz_h0(p), kiz_h0(p)
        ch = cfg.inspection_chain
        self.chain_koz = chain_from_params(self.model, self.koz, ch)
        self.chain_kiz = chain_from_params(self.model, self.kiz, ch)
        self.combined = ScalarField("zone_mean", lambda x: 0.5 * (self.koz.fn(x) + self.kiz.fn(x)),
                                    grad_fn=lambda x: 0.5 * (self.koz.grad_fn(x) + self.kiz.grad_fn(x)))
        if initial_states is None:
            initial_states = inspection_initials(None, p).states
        self.initial_states = np.asarray(initial_states, dtype=float)
        if env_cfg.hbar is not None:
            self.hbar = env_cfg.hbar
        else:
            self.hbar = 0.5 * (float(np.mean([self.koz(x) for x in self.initial_states]))
                               + float(np.mean([self.kiz(x) for x in self.initial_states])))
        a = cfg.actions
        self.gain_map = BoundedActionMap(((a.alpha_min, a.alpha_max),), (env_cfg.gain_log_scale,))
        self.obs_lo1, self.obs_hi1 = observation_bounds(cfg, "inspection", 1)
        self.obs_lo2, self.obs_hi2 = observation_bounds(cfg, "inspection", 2)
        self._lie_b2 = [self.chain_koz.top.lie_fn(self.model), self.chain_kiz.top.lie_fn(self.model)]
        self._lie_c = self.combined.lie_fn(self.model)
        self._obs2 = self._build_obs2()
        self.head = BarrierHead(constant=0.0)
        self.rng = np.random.default_rng(0)
        self.x = self.initial_states[0].copy()
        self.t, self.k, self.score = 0.0, 0, 0.0

    @property
    def obs_dim(self) -> int:
        return 6 if self.stage == 1 else 6 + 3 + 3

    def seed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def set_policy_snapshot(self, policy) -> None:
        if self.stage == 2:
            self.head = BarrierHead.from_policy(policy)

    def set_barrier_head(self, head: BarrierHead) -> None:
        self.head = head

    def _build_obs2(self):
        model, hc = self.model, self.combined
        lo, hi = self.obs_lo2, self.obs_hi2

        def scaled(x):
            g = hc.grad_fn(x)
            raw = jnp.concatenate([x, g @ model.input_fn(x), jnp.stack([g @ model.drift_fn(x), hc.fn(x), 0.0 * x[0]])])
            return scale_observation(raw, lo, hi, xp=jnp)

        return jax.jit(lambda x: (scaled(x), jax.jacobian(scaled)(x))), jax.jit(scaled)

    def observe(self, x=None, stage: int | None = None) -> np.ndarray:
        x = self.x if x is None else np.asarray(x, dtype=float)
        if (stage or self.stage) == 1:
            return scale_observation(x, self.obs_lo1, self.obs_hi1)
        return np.asarray(self._obs2[1](x))

    def reset(self, x0=None) -> np.ndarray:
        if x0 is None:
            x0 = self.initial_states[self.rng.integers(len(self.initial_states))]
        self.x = self.model.check_state(np.array(x0, dtype=float))
        self.t, self.k, self.score = 0.0, 0, 0.0
        return self.observe()

    def in_cstar(self, x) -> bool:
        return chain_membership(self.chain_koz, x).in_Cstar and chain_membership(self.chain_kiz, x).in_Cstar

    def zone_h0(self, x) -> float:
        return min(self.koz(x), self.kiz(x))

    # -- action decoding ----------------------------------------------------

    def durations(self, eta_b: float, eta_c: float) -> tuple[float, float]:
        p = self.params
        t_b = p.burn_min + 0.5 * (eta_b + 1.0) * (p.burn_max - p.burn_min)
        t_c = p.coast_min + 0.5 * (eta_c + 1.0) * (p.coast_max - p.coast_min)
        return t_b, t_c

    def enhancement(self, u_hat_raw, lam_raw) -> np.ndarray:
        d = np.asarray(u_hat_raw, dtype=float)
        nrm = np.linalg.norm(d)
        u_hat = d / nrm if nrm > 0 else np.zeros(3)
        lam = float(squash(lam_raw, 0.0, 1.0))
        return lam * self.params.u_max * u_hat

    def step(self, action) -> StepResult:
        return self.step_stage1(action) if self.stage == 1 else self.step_stage2(action)

    def step_stage1(self, action) -> StepResult:
        a = np.asarray(action, dtype=float)
        alphas = (float(self.gain_map(a[0:1])[0]), float(self.gain_map(a[1:2])[0]))
        return self.step_explicit(alphas, math.tanh(a[2]), math.tanh(a[3]), self.enhancement(a[4:7], a[7]), stage=1)

    def step_stage2(self, action) -> StepResult:
        a = np.asarray(action, dtype=float)
        alpha = float(self.gain_map(a[1:2])[0])
        return self.step_explicit((alpha,), math.tanh(a[2]), math.tanh(a[3]), self.enhancement(a[4:7], a[7]),
                                  stage=2, h_raw=float(a[0]))

    def residual_terms(self, x, h_raw: float | None = None):
        hc, gc, lfc, lgc = self._lie_c(x)
        s, J = self._obs2[0](np.asarray(x, dtype=float))
        s, J = np.asarray(s), np.asarray(J)
        m, dm = self.head(s)
        raw = m if h_raw is None else h_raw
        d_res = (1.0 - math.tanh(m) ** 2) * (J.T @ dm)
        f = np.asarray(self.model._jit["f"](x))
        gm = np.asarray(self.model._jit["g"](x))
        hb = self.hbar
        return hc + hb * math.tanh(raw), lfc + hb * float(d_res @ f), lgc + hb * (d_res @ gm), gc + hb * d_res

    def step_explicit(self, alphas, eta_b: float, eta_c: float, u_rl, stage: int = 1,
                      h_raw: float | None = None) -> StepResult:
        p, qp = self.params, self.cfg.qp
        t_b, t_c = self.durations(eta_b, eta_c)
        remaining = p.mission_time - self.t
        t_b = min(t_b, remaining)
        t_c = max(0.0, min(t_c, remaining - t_b))
        x = self.x
        if stage == 1:
            lies = []
            for lie in self._lie_b2:
                h, _, lf, lg = lie(x)
                lies.append((h, lf, lg))
            prob = inspection1_from_lie(lies, alphas, [qp.p2, qp.p3], self.model.input_set, u_ref=u_rl)
        else:
            h, lf, lg, _ = self.residual_terms(x, h_raw)
            prob = inspection1_from_lie([(h, lf, lg)], alphas, [qp.p2], self.model.input_set, u_ref=u_rl)
        sol = solve(prob, qp.tol, qp.max_iter)
        u = np.asarray(sol.u, dtype=float)
        rescaled = False
        if np.linalg.norm(u) > p.u_max:
            u = self.model.input_set.project(u)
            rescaled = True
        u_qp = u - np.asarray(u_rl)

        times, states = [np.array([self.t])], [x[None, :]]
        if t_b > 0:
            path = propagate_path(self.model, x, u, t_b, p.burn_substeps)
            times.append(self.t + t_b * np.arange(1, p.burn_substeps + 1) / p.burn_substeps)
            states.append(path[1:])
            x = path[-1]
        if t_c > 0:
            n_sub = max(1, math.ceil(t_c / p.coast_step - 1e-9))
            path = propagate_path(self.model, x, np.zeros(3), t_c, n_sub)
            times.append(self.t + t_b + t_c * np.arange(1, n_sub + 1) / n_sub)
            states.append(path[1:])
            x = path[-1]
        times_a, states_a = np.concatenate(times), np.vstack(states)
        d_score = inspection_score_increment(times_a, states_a, p)
        self.score += d_score
        self.x = x
        self.t = float(self.t + t_b + t_c)
        self.k += 1

        koz, kiz = self.koz(x), self.kiz(x)
        rw = self.cfg.reward
        bonus = -rw.c_i * d_score if self.env_cfg.literal_bonus_sign else rw.c_i * d_score
        reward = -rw.c_h1 * max(0.0, -koz) - rw.c_h2 * max(0.0, -kiz) + bonus
        r_nodes = np.linalg.norm(states_a[:, :3], axis=1)
        D = p.r_kiz**2 - p.r_koz**2
        path_min = float(np.min(np.minimum(r_nodes**2 - p.r_koz**2, p.r_kiz**2 - r_nodes**2)) / D)
        done = self.t >= p.mission_time - 1e-9
        info = {
            "t": self.t, "x": x.copy(), "u": u.copy(), "u_qp": u_qp, "u_rl": np.asarray(u_rl).copy(),
            "t_b": t_b, "t_c": t_c, "alphas": tuple(alphas), "stage": stage, "h0": min(koz, kiz),
            "h_koz": koz, "h_kiz": kiz, "h0_path_min": path_min, "violation": bool(path_min < 0),
            "score_increment": d_score, "score": self.score, "impulse": float(np.linalg.norm(u)) * t_b,
            "rescaled": rescaled, "truncated": bool(done), "path_t": times_a, "path_x": states_a,
            "notes": list(prob.notes), **_qp_info(sol),
        }
        return StepResult(self.observe(x), float(reward), bool(done), info)


def make_env(cfg: Config, env_cfg: EnvConfig, **kw):
    if env_cfg.scenario == "inspection":
        return InspectionEnv(cfg, env_cfg, **kw)
    return BenchmarkEnv(cfg, env_cfg, **kw)


def env_factory(cfg: Config, env_cfg: EnvConfig, **kw) -> Callable[[int], Any]:
    """Factory for :func:`iccbf_rl.ppo.train`; the benchmark grid is split once and shared."""
    if env_cfg.scenario != "inspection" and "grid" not in kw:
        probe = BenchmarkEnv(cfg, env_cfg, **kw)
        kw = {**kw, "grid": probe.grid}
    return lambda i: make_env(cfg, env_cfg, **kw)
