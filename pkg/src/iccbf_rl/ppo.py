"""Proximal policy optimization on numpy networks.

Environments follow a small gym-like contract::

    env.obs_dim, env.act_dim
    env.seed(seed)
    obs = env.reset()            # samples an initial state from env's own rng
    res = env.step(raw_action)   # res.obs, res.reward, res.done, res.info

``info["truncated"]`` marks a time-limit end; its value is bootstrapped.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .neural import CHECKPOINT_VERSION, Mlp

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    learning_rate: float = 1e-3
    lr_schedule: str = "constant"  # "constant" | "linear" (to zero over total_steps)
    batch_size: int = 64
    rollout_steps: int = 1280  # per environment
    epochs: int = 10
    gamma: float = 0.95
    gae_lambda: float = 0.99
    clip_range: float = 0.2
    entropy_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    init_std: float = 0.2
    hidden: tuple[int, ...] = (64, 64, 64, 64)
    n_envs: int = 1
    total_steps: int = 50_000
    eval_episodes: int = 10
    normalize_advantage: bool = True

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 < self.gae_lambda <= 1:
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if not 0 < self.clip_range < 1:
            raise ValueError("clip_range must lie in (0, 1)")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError("lr_schedule must be 'constant' or 'linear'")
        if min(self.batch_size, self.rollout_steps, self.epochs, self.n_envs, self.total_steps) < 1:
            raise ValueError("sizes and counts must be >= 1")
        if self.learning_rate <= 0 or self.init_std <= 0:
            raise ValueError("learning_rate and init_std must be positive")

    def replace(self, **kw) -> "PpoConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PpoConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


def preset(scenario: str, stage: int, total_steps: int | None = None) -> PpoConfig:
    """Hyperparameter tables; ``total_steps`` defaults to a desk-scale budget."""
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    if scenario in ("cruise", "docking"):
        rollout = 1280 if scenario == "cruise" else 2560
        if stage == 1:
            cfg = PpoConfig(1e-3, "constant", 64, rollout, 10, 0.95, 0.99, 0.2, 0.01, n_envs=8)
        else:
            cfg = PpoConfig(1e-4, "linear", 256, rollout, 10, 0.999, 0.99, 0.2, 0.01, n_envs=1)
    elif scenario == "inspection":
        if stage == 1:
            cfg = PpoConfig(1e-4, "constant", 64, 1280, 10, 0.95, 0.99, 0.2, 0.01, init_std=0.2)
        else:
            cfg = PpoConfig(1e-4, "linear", 256, 1280, 10, 0.95, 0.99, 0.2, 0.01, init_std=0.21)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    if total_steps is not None:
        cfg = cfg.replace(total_steps=int(total_steps))
    return cfg


# --------------------------------------------------------------------------
# policy


class GaussianPolicy:
    """Diagonal Gaussian actor with state-independent log-std, plus a separate critic."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: Sequence[int] = (64, 64, 64, 64),
                 init_std: float = 0.2, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.act_dim = int(obs_dim), int(act_dim)
        self.actor = Mlp([obs_dim, *hidden, act_dim], rng, output_gain=0.01)
        self.critic = Mlp([obs_dim, *hidden, 1], rng, output_gain=1.0)
        self.log_std = np.full(act_dim, math.log(init_std))

    @property
    def n_params(self) -> int:
        return self.actor.n_params + self.act_dim + self.critic.n_params

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.actor.get_flat(), self.log_std, self.critic.get_flat()])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        na = self.actor.n_params
        self.actor.set_flat(theta[:na])
        self.log_std = theta[na:na + self.act_dim].copy()
        self.critic.set_flat(theta[na + self.act_dim:])

    def copy(self) -> "GaussianPolicy":
        pol = GaussianPolicy.__new__(GaussianPolicy)
        pol.obs_dim, pol.act_dim = self.obs_dim, self.act_dim
        pol.actor, pol.critic = self.actor.copy(), self.critic.copy()
        pol.log_std = self.log_std.copy()
        return pol

    def mean(self, obs) -> np.ndarray:
        return self.actor.forward(obs)

    def value(self, obs) -> np.ndarray:
        return self.critic.forward(obs)[..., 0]

    def log_prob(self, obs, actions) -> np.ndarray:
        mu = self.mean(obs)
        z = (np.asarray(actions) - mu) / np.exp(self.log_std)
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) - 0.5 * self.act_dim * LOG_2PI

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.act_dim * (1.0 + LOG_2PI))

    def act(self, obs, rng: np.random.Generator | None = None, deterministic: bool = False):
        """(raw action, log-prob, value) for one observation or a batch."""
        obs = np.asarray(obs, dtype=float)
        mu = self.mean(obs)
        if deterministic:
            a = mu
        else:
            a = mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)
        return a, self.log_prob(obs, a), self.value(obs)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {
            "version": np.array(CHECKPOINT_VERSION),
            "obs_dim": np.array(self.obs_dim),
            "act_dim": np.array(self.act_dim),
            "actor_sizes": np.asarray(self.actor.layer_sizes, dtype=np.int64),
            "critic_sizes": np.asarray(self.critic.layer_sizes, dtype=np.int64),
            "params": self.get_flat(),
        }

    @classmethod
    def from_state(cls, state) -> "GaussianPolicy":
        if int(state["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(state['version'])}")
        hidden = [int(s) for s in state["actor_sizes"]][1:-1]
        pol = cls(int(state["obs_dim"]), int(state["act_dim"]), hidden)
        if [int(s) for s in state["critic_sizes"]] != pol.critic.layer_sizes:
            raise ValueError("critic layer sizes do not match the actor")
        pol.set_flat(state["params"])
        return pol

    def save(self, path: str | Path, **extra) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, **self.state_dict(), **extra)

    @classmethod
    def load(cls, path: str | Path) -> "GaussianPolicy":
        with np.load(path) as data:
            return cls.from_state(data)


# --------------------------------------------------------------------------
# rollouts and advantages


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, E, obs_dim)
    actions: np.ndarray  # (T, E, act_dim)
    log_probs: np.ndarray  # (T, E)
    rewards: np.ndarray  # (T, E)
    values: np.ndarray  # (T, E)
    dones: np.ndarray  # (T, E) 1.0 when the transition ended the episode
    last_values: np.ndarray  # (E,) value of the observation after the last step
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list[float] = field(default_factory=list)

    @classmethod
    def empty(cls, n_steps: int, n_envs: int, obs_dim: int, act_dim: int) -> "RolloutBuffer":
        z = lambda *s: np.zeros(s)  # noqa: E731
        return cls(z(n_steps, n_envs, obs_dim), z(n_steps, n_envs, act_dim), z(n_steps, n_envs),
                   z(n_steps, n_envs), z(n_steps, n_envs), z(n_steps, n_envs), z(n_envs))

    @property
    def size(self) -> int:
        return self.rewards.size


def compute_gae(rewards, values, dones, last_values, gamma: float, lam: float):
    """Generalized advantage estimation over (T, E) arrays; returns (advantages, returns)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    for t in range(T - 1, -1, -1):
        nxt = last_values if t == T - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * nxt * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv, adv + values


class _EnvRunner:
    """Steps ``n_envs`` environments in lockstep with automatic resets."""

    def __init__(self, envs: list):
        self.envs = envs
        self.obs = np.stack([e.reset() for e in envs])
        self.ep_return = np.zeros(len(envs))

    def collect(self, policy: GaussianPolicy, n_steps: int, rng: np.random.Generator,
                gamma: float) -> RolloutBuffer:
        E = len(self.envs)
        buf = RolloutBuffer.empty(n_steps, E, policy.obs_dim, policy.act_dim)
        for t in range(n_steps):
            a, logp, v = policy.act(self.obs, rng)
            buf.obs[t], buf.actions[t], buf.log_probs[t], buf.values[t] = self.obs, a, logp, v
            for i, env in enumerate(self.envs):
                res = env.step(a[i])
                r = float(res.reward)
                self.ep_return[i] += r
                if res.done:
                    if res.info.get("truncated", False):
                        r += gamma * float(policy.value(res.obs))
                    buf.episode_returns.append(float(self.ep_return[i]))
                    self.ep_return[i] = 0.0
                    self.obs[i] = env.reset()
                else:
                    self.obs[i] = res.obs
                buf.rewards[t, i] = r
                buf.dones[t, i] = float(res.done)
        buf.last_values = policy.value(self.obs)
        return buf


def collect_rollout(envs, policy: GaussianPolicy, n_steps: int, rng: np.random.Generator,
                    gamma: float = 0.99) -> RolloutBuffer:
    """One-shot rollout from freshly reset environments."""
    envs = envs if isinstance(envs, (list, tuple)) else [envs]
    return _EnvRunner(list(envs)).collect(policy, n_steps, rng, gamma)


# --------------------------------------------------------------------------
# update


class Adam:
    def __init__(self, n: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m, self.v, self.t = np.zeros(n), np.zeros(n), 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta - lr * mhat / (np.sqrt(vhat) + self.eps)


def ppo_loss_and_grad(policy: GaussianPolicy, obs, actions, old_logp, adv, returns, cfg: PpoConfig):
    """Clipped surrogate + value MSE - entropy bonus, and its flat gradient."""
    B = obs.shape[0]
    mu, acts_a = policy.actor.forward_cached(obs)
    std = np.exp(policy.log_std)
    z = (actions - mu) / std
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(policy.log_std) - 0.5 * policy.act_dim * LOG_2PI
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1 - cfg.clip_range, 1 + cfg.clip_range)
    surr = np.minimum(ratio * adv, clipped * adv)
    active = ratio * adv <= clipped * adv
    # d(-mean surr)/d logp
    coef = -np.where(active, ratio * adv, 0.0) / B
    g_mu = coef[:, None] * (z / std)
    g_logstd = np.sum(coef[:, None] * (z * z - 1.0), axis=0) - cfg.entropy_coef
    g_actor, _ = policy.actor.backward(acts_a, g_mu)

    v, acts_c = policy.critic.forward_cached(obs)
    err = v[:, 0] - returns
    g_v = (2.0 * cfg.vf_coef / B) * err[:, None]
    g_critic, _ = policy.critic.backward(acts_c, g_v)

    entropy = policy.entropy()
    loss_pi = -float(np.mean(surr))
    loss_v = float(np.mean(err * err))
    stats = {
        "policy_loss": loss_pi,
        "value_loss": loss_v,
        "entropy": entropy,
        "loss": loss_pi + cfg.vf_coef * loss_v - cfg.entropy_coef * entropy,
        "approx_kl": float(np.mean(old_logp - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1) > cfg.clip_range)),
        "max_ratio_dev": float(np.max(np.abs(ratio - 1))),
        "surrogate_gap": float(np.max(np.abs(ratio * adv - surr))),
    }
    return stats, np.concatenate([g_actor, g_logstd, g_critic])


def ppo_update(policy: GaussianPolicy, buf: RolloutBuffer, cfg: PpoConfig, opt: Adam, lr: float,
               rng: np.random.Generator) -> dict[str, float]:
    if buf.advantages is None:
        buf.advantages, buf.returns = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values,
                                                  cfg.gamma, cfg.gae_lambda)
    obs = buf.obs.reshape(-1, policy.obs_dim)
    act = buf.actions.reshape(-1, policy.act_dim)
    old = buf.log_probs.ravel()
    adv_all = buf.advantages.ravel()
    ret = buf.returns.ravel()
    n = obs.shape[0]
    bs = min(cfg.batch_size, n)
    history: list[dict[str, float]] = []
    first: dict[str, float] | None = None
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            adv = adv_all[idx]
            if cfg.normalize_advantage and idx.size > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            stats, grad = ppo_loss_and_grad(policy, obs[idx], act[idx], old[idx], adv, ret[idx], cfg)
            if first is None:
                first = stats
            gnorm = float(np.linalg.norm(grad))
            if gnorm > cfg.max_grad_norm:
                grad = grad * (cfg.max_grad_norm / gnorm)
            policy.set_flat(opt.step(policy.get_flat(), grad, lr))
            stats["grad_norm"] = gnorm
            history.append(stats)
    out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    out["first_max_ratio_dev"] = first["max_ratio_dev"]
    out["first_surrogate_gap"] = first["surrogate_gap"]
    return out


# --------------------------------------------------------------------------
# evaluation and training


@dataclass
class EvalResult:
    mean_reward: float
    returns: list[float]
    lengths: list[int]
    infos: list[list[dict]]


def evaluate(policy: GaussianPolicy, env, n_episodes: int, deterministic: bool = True,
             rng: np.random.Generator | None = None, keep_infos: bool = False) -> EvalResult:
    returns, lengths, infos = [], [], []
    for _ in range(n_episodes):
        obs = env.reset()
        total, steps, ep = 0.0, 0, []
        while True:
            a, _, _ = policy.act(obs, rng, deterministic=deterministic)
            res = env.step(a)
            total += float(res.reward)
            steps += 1
            if keep_infos:
                ep.append(res.info)
            obs = res.obs
            if res.done:
                break
        returns.append(total)
        lengths.append(steps)
        infos.append(ep)
    return EvalResult(float(np.mean(returns)), returns, lengths, infos)


@dataclass
class TrainResult:
    policy: GaussianPolicy
    best_reward: float
    curve: list[dict[str, float]]
    steps: int


CURVE_COLUMNS = ("step", "mean_eval_reward", "mean_train_return", "policy_loss", "value_loss",
                 "entropy", "approx_kl", "clip_fraction", "learning_rate")


def _lr_at(cfg: PpoConfig, steps_done: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    return cfg.learning_rate * max(0.0, 1.0 - steps_done / cfg.total_steps)


def _write_curve(path: Path, curve: list[dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for row in curve:
            w.writerow([row["step"]] + [repr(float(row[c])) for c in CURVE_COLUMNS[1:]])


def _save_state(path: Path, policy, opt: Adam, steps: int, best: float, curve, rng, cfg) -> None:
    extra = {
        "adam_m": opt.m, "adam_v": opt.v, "adam_t": np.array(opt.t), "steps": np.array(steps),
        "best": np.array(best),
        "rng": np.array(json.dumps(rng.bit_generator.state)),
        "curve": np.array(json.dumps(curve)),
        "ppo_config": np.array(json.dumps(cfg.to_dict(), sort_keys=True)),
    }
    policy.save(path, **extra)


def _sync_snapshot(envs, policy: GaussianPolicy) -> None:
    snap = None
    for env in envs:
        if hasattr(env, "set_policy_snapshot"):
            snap = snap or policy.copy()
            env.set_policy_snapshot(snap)


def train(env_factory: Callable[[int], Any], cfg: PpoConfig, seed: int, out_dir: str | Path | None = None,
          resume: bool = False, policy: GaussianPolicy | None = None,
          log: Callable[[dict], None] | None = None) -> TrainResult:
    """Train, evaluating after each rollout; keeps the best policy by mean eval reward.

    ``env_factory(i)`` builds environment ``i``; indices ``0..n_envs-1`` are
    training environments and index ``n_envs`` is the evaluation environment.
    Each environment is seeded from ``seed`` and its index.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    envs = [env_factory(i) for i in range(cfg.n_envs)]
    for i, env in enumerate(envs):
        env.seed(seed * 7919 + i)
    eval_env = env_factory(cfg.n_envs)
    rng = np.random.default_rng(seed)
    if policy is None:
        policy = GaussianPolicy(envs[0].obs_dim, envs[0].act_dim, cfg.hidden, cfg.init_std,
                                np.random.default_rng([seed, 1]))
    opt = Adam(policy.n_params)
    steps, best_reward, curve = 0, -np.inf, []
    best_policy = policy.copy()

    if resume and out is not None and (out / "last.npz").exists():
        with np.load(out / "last.npz") as data:
            policy = GaussianPolicy.from_state(data)
            opt.m, opt.v, opt.t = data["adam_m"].copy(), data["adam_v"].copy(), int(data["adam_t"])
            steps, best_reward = int(data["steps"]), float(data["best"])
            rng.bit_generator.state = json.loads(str(data["rng"]))
            curve = json.loads(str(data["curve"]))
        if (out / "best.npz").exists():
            best_policy = GaussianPolicy.load(out / "best.npz")
        # environment rngs are re-seeded from the step count so resumed runs stay deterministic
        for i, env in enumerate(envs):
            env.seed(seed * 7919 + i + 104729 * steps)

    _sync_snapshot(envs + [eval_env], policy)
    runner = _EnvRunner(envs)
    per_rollout = cfg.rollout_steps * cfg.n_envs
    while steps < cfg.total_steps:
        _sync_snapshot(envs, policy)
        buf = runner.collect(policy, cfg.rollout_steps, rng, cfg.gamma)
        lr = _lr_at(cfg, steps)
        stats = ppo_update(policy, buf, cfg, opt, lr, rng)
        steps += per_rollout

        _sync_snapshot([eval_env], policy)
        eval_env.seed(seed * 7919 + 7777)
        ev = evaluate(policy, eval_env, cfg.eval_episodes, deterministic=True)
        row = {"step": steps, "mean_eval_reward": ev.mean_reward,
               "mean_train_return": float(np.mean(buf.episode_returns)) if buf.episode_returns else float("nan"),
               "learning_rate": lr, **{k: stats[k] for k in ("policy_loss", "value_loss", "entropy",
                                                             "approx_kl", "clip_fraction")}}
        curve.append(row)
        if ev.mean_reward > best_reward:
            best_reward = ev.mean_reward
            best_policy = policy.copy()
            if out is not None:
                best_policy.save(out / "best.npz")
        if out is not None:
            _save_state(out / "last.npz", policy, opt, steps, best_reward, curve, rng, cfg)
            _write_curve(out / "curve.csv", curve)
        if log is not None:
            log(row)
    return TrainResult(best_policy, float(best_reward), curve, steps)


# --------------------------------------------------------------------------
# toy environment for smoke tests


@dataclass
class _Step:
    obs: np.ndarray
    reward: float
    done: bool
    info: dict


class BanditEnv:
    """One-step episodes with reward -(a - target)^2 on a constant observation."""

    obs_dim = 1
    act_dim = 1

    def __init__(self, target: float = 0.5):
        self.target = target

    def seed(self, seed: int) -> None:
        pass

    def reset(self, x0=None) -> np.ndarray:
        return np.zeros(1)

    def step(self, action) -> _Step:
        a = float(np.asarray(action).ravel()[0])
        return _Step(np.zeros(1), -(a - self.target) ** 2, True, {})
