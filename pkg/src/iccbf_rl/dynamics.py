"""Control-affine models x' = f(x) + g(x) u and a zero-order-hold RK4 propagator.

Drift and input-matrix callables are written with ``jax.numpy`` so barrier
chains can differentiate through them; the public helpers below return
plain numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .config import CruiseParams, DockingParams, InspectionParams


class SingularStateError(ValueError):
    """State outside the model's valid domain (e.g. zero orbital radius)."""


class DivergenceError(FloatingPointError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class InputSet:
    """Admissible inputs: a Euclidean ball of radius ``bounds[0]`` or a box."""

    kind: str
    bounds: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("norm_ball", "box"):
            raise ValueError(f"unknown input set kind {self.kind!r}")
        if not self.bounds or min(self.bounds) <= 0:
            raise ValueError("input bounds must be strictly positive")
        if self.kind == "norm_ball" and len(self.bounds) != 1:
            raise ValueError("norm_ball takes a single radius")

    @classmethod
    def ball(cls, radius: float) -> "InputSet":
        return cls("norm_ball", (float(radius),))

    @classmethod
    def box(cls, *bounds: float) -> "InputSet":
        return cls("box", tuple(float(b) for b in bounds))

    @property
    def u_max(self) -> float:
        return self.bounds[0]

    def bound_vector(self, m: int) -> np.ndarray:
        if self.kind == "box" and len(self.bounds) not in (1, m):
            raise ValueError(f"box has {len(self.bounds)} bounds for m={m}")
        return np.broadcast_to(np.asarray(self.bounds, dtype=float), (m,)).copy()

    def contains(self, u, rtol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "norm_ball":
            return bool(np.linalg.norm(u) <= self.u_max * (1 + rtol))
        b = self.bound_vector(u.size)
        return bool(np.all(np.abs(u) <= b * (1 + rtol)))

    def project(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "norm_ball":
            nrm = np.linalg.norm(u)
            return u if nrm <= self.u_max else u * (self.u_max / nrm)
        b = self.bound_vector(u.size)
        return np.clip(u, -b, b)

    def support(self, v, xp=np):
        """sup over the set of v . u (closed form)."""
        if self.kind == "norm_ball":
            return self.u_max * _safe_norm(v, xp)
        b = xp.asarray(self.bounds)
        return xp.sum(b * xp.abs(v))


def _safe_norm(v, xp):
    # Gradient-safe at v = 0 to any derivative order (double-where).
    sq = xp.sum(v * v)
    if xp is np:
        return float(np.sqrt(sq))
    pos = sq > 0
    return jnp.where(pos, jnp.sqrt(jnp.where(pos, sq, 1.0)), 0.0)


@dataclass(frozen=True)
class PropagatorConfig:
    substeps_per_hold: int = 10
    max_step: float | None = None

    def __post_init__(self):
        if self.substeps_per_hold < 1:
            raise ValueError("substeps_per_hold must be >= 1")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive")

    def substeps_for(self, duration: float) -> int:
        n = self.substeps_per_hold
        if self.max_step is not None:
            n = max(n, math.ceil(duration / self.max_step - 1e-12))
        return n


@dataclass(frozen=True, eq=False)
class ControlAffineModel:
    name: str
    n: int
    m: int
    drift_fn: Callable
    input_fn: Callable
    input_set: InputSet
    params: Any
    labels: tuple[str, ...]
    singular_fn: Callable[[np.ndarray], str | None] | None = None
    _jit: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._jit["f"] = jax.jit(self.drift_fn)
        self._jit["g"] = jax.jit(self.input_fn)
        self._jit["step"] = jax.jit(self._rk4_step)

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"{self.name}: state must have shape ({self.n},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{self.name}: non-finite state {x}")
        if self.singular_fn is not None:
            msg = self.singular_fn(x)
            if msg:
                raise SingularStateError(f"{self.name}: {msg}")
        return x

    def xdot(self, x, u):
        return self.drift_fn(x) + self.input_fn(x) @ u

    def _rk4_step(self, x, u, h):
        k1 = self.xdot(x, u)
        k2 = self.xdot(x + 0.5 * h * k1, u)
        k3 = self.xdot(x + 0.5 * h * k2, u)
        k4 = self.xdot(x + h * k3, u)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _rk4_many(self, n_sub: int):
        key = ("many", n_sub)
        if key not in self._jit:

            def run(x, u, h):
                return jax.lax.fori_loop(0, n_sub, lambda _, s: self._rk4_step(s, u, h), x)

            self._jit[key] = jax.jit(run)
        return self._jit[key]


def eval_drift(model: ControlAffineModel, x) -> np.ndarray:
    x = model.check_state(x)
    return np.asarray(model._jit["f"](x))


def eval_input_matrix(model: ControlAffineModel, x) -> np.ndarray:
    x = model.check_state(x)
    return np.asarray(model._jit["g"](x)).reshape(model.n, model.m)


def _check_input(model: ControlAffineModel, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.m,) or not np.all(np.isfinite(u)):
        raise ValueError(f"{model.name}: control must be finite with shape ({model.m},)")
    if not model.input_set.contains(u):
        raise ValueError(f"{model.name}: control {u} outside the admissible set")
    return u


def propagate_zoh(
    model: ControlAffineModel,
    x,
    u,
    hold_duration: float,
    cfg: PropagatorConfig = PropagatorConfig(),
) -> np.ndarray:
    """Integrate with u held constant over ``hold_duration`` using fixed-step RK4."""
    if hold_duration <= 0:
        raise ValueError("hold_duration must be positive")
    x = model.check_state(x)
    u = _check_input(model, u)
    n_sub = cfg.substeps_for(hold_duration)
    out = np.asarray(model._rk4_many(n_sub)(x, u, hold_duration / n_sub))
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"{model.name}: non-finite state after propagation")
    return out


def propagate_path(
    model: ControlAffineModel,
    x,
    u,
    duration: float,
    n_sub: int,
    check_input: bool = True,
) -> np.ndarray:
    """Like :func:`propagate_zoh` but returns all ``n_sub + 1`` RK4 nodes."""
    if duration <= 0 or n_sub < 1:
        raise ValueError("duration must be positive and n_sub >= 1")
    x = model.check_state(x)
    u = _check_input(model, u) if check_input else np.asarray(u, dtype=float)
    h = duration / n_sub
    step = model._jit["step"]
    path = np.empty((n_sub + 1, model.n))
    path[0] = x
    cur = x
    for k in range(n_sub):
        cur = step(cur, u, h)
        path[k + 1] = cur
    if not np.all(np.isfinite(path)):
        raise DivergenceError(f"{model.name}: non-finite state after propagation")
    return path


# --------------------------------------------------------------------------
# scenario models


def cruise_model(params: CruiseParams = CruiseParams()) -> ControlAffineModel:
    params.validate()
    m, g0, f0, f1, f2, v0 = params.mass, params.g0, params.f0, params.f1, params.f2, params.v0

    def drift(x):
        v = x[1]
        return jnp.stack([v0 - v, -(f0 + f1 * v + f2 * v * v) / m])

    def input_matrix(x):
        return jnp.array([[0.0], [g0]])

    return ControlAffineModel(
        name="cruise",
        n=2,
        m=1,
        drift_fn=drift,
        input_fn=input_matrix,
        input_set=InputSet.box(params.u_max),
        params=params,
        labels=("d", "v"),
    )


def _orbital_singular(orbit_radius: float, planar: bool):
    def check(x):
        p = x[:2] if planar else x[:3]
        radius = math.hypot(orbit_radius + p[0], *p[1:])
        if radius <= 1e-9 * orbit_radius:
            return "chaser orbital radius is zero"
        return None

    return check


def docking_model(params: DockingParams = DockingParams()) -> ControlAffineModel:
    params.validate()
    r, mu, n, w, mc = params.orbit_radius, params.mu, params.mean_motion, params.omega, params.mass

    def drift(x):
        px, py, vx, vy = x[0], x[1], x[2], x[3]
        rc3 = ((r + px) ** 2 + py**2) ** 1.5
        ax = n * n * px + 2 * n * vy + mu / r**2 - mu * (r + px) / rc3
        ay = n * n * py - 2 * n * vx - mu * py / rc3
        return jnp.stack([vx, vy, ax, ay, jnp.asarray(w, dtype=x.dtype)])

    def input_matrix(x):
        return jnp.array([[0.0, 0.0], [0.0, 0.0], [1.0 / mc, 0.0], [0.0, 1.0 / mc], [0.0, 0.0]])

    return ControlAffineModel(
        name="docking",
        n=5,
        m=2,
        drift_fn=drift,
        input_fn=input_matrix,
        input_set=InputSet.ball(params.u_max),
        params=params,
        labels=("p_x", "p_y", "v_x", "v_y", "psi"),
        singular_fn=_orbital_singular(r, planar=True),
    )


def inspection_model(params: InspectionParams = InspectionParams()) -> ControlAffineModel:
    params.validate()
    r, mu, n, mc = params.orbit_radius, params.mu, params.mean_motion, params.mass

    def drift(x):
        px, py, pz, vx, vy, vz = (x[i] for i in range(6))
        rc3 = ((r + px) ** 2 + py**2 + pz**2) ** 1.5
        ax = n * n * px + 2 * n * vy + mu / r**2 - mu * (r + px) / rc3
        ay = n * n * py - 2 * n * vx - mu * py / rc3
        az = -mu * pz / rc3
        return jnp.stack([vx, vy, vz, ax, ay, az])

    g = np.zeros((6, 3))
    g[3:, :] = np.eye(3) / mc

    def input_matrix(x):
        return jnp.asarray(g)

    return ControlAffineModel(
        name="inspection",
        n=6,
        m=3,
        drift_fn=drift,
        input_fn=input_matrix,
        input_set=InputSet.ball(params.u_max),
        params=params,
        labels=("p_x", "p_y", "p_z", "v_x", "v_y", "v_z"),
        singular_fn=_orbital_singular(r, planar=False),
    )


def model_for(scenario: str, params) -> ControlAffineModel:
    builders = {"cruise": cruise_model, "docking": docking_model, "inspection": inspection_model}
    try:
        return builders[scenario](params)
    except KeyError:
        raise ValueError(f"unknown scenario {scenario!r}") from None


def as_state(values: Sequence[float], model: ControlAffineModel) -> np.ndarray:
    return model.check_state(np.asarray(values, dtype=float))
