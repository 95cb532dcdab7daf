"""Safety fields, class-K margins, Lie derivatives and the ICCBF chain b0..bN.

Fields are built from ``jax.numpy`` expressions so every chain level has an
exact gradient by automatic differentiation of the closed-form recursion.
A finite-difference chain is available for fields that are not traceable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .config import ChainParams, CruiseParams, DockingParams, InspectionParams
from .dynamics import ControlAffineModel


@dataclass(frozen=True)
class ClassKFn:
    """Strictly increasing margin with value 0 at 0.

    kinds: ``linear`` k*s, ``power`` k*sign(s)*|s|**p, ``scaled_atan``
    k*c*atan(s/c) (slope k at the origin, saturating at k*c*pi/2).
    """

    kind: str = "linear"
    k: float = 1.0
    p: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "power", "scaled_atan"):
            raise ValueError(f"unknown class-K kind {self.kind!r}")
        if self.k <= 0 or self.p <= 0 or self.c <= 0:
            raise ValueError("class-K parameters must be positive")

    def __call__(self, s):
        xp = jnp if isinstance(s, jax.Array) else np
        if self.kind == "linear":
            return self.k * s
        if self.kind == "power":
            return self.k * xp.sign(s) * xp.abs(s) ** self.p
        return self.k * self.c * xp.arctan(s / self.c)


def classk_eval(fn: ClassKFn, s: float) -> float:
    return float(fn(s))


def gradient_fd(fn: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Central differences with per-component step 1e-6 * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = 1e-6 * (1.0 + abs(x[i]))
        xp_, xm = x.copy(), x.copy()
        xp_[i] += h
        xm[i] -= h
        grad[i] = (float(fn(xp_)) - float(fn(xm))) / (xp_[i] - xm[i])
    return grad


class ScalarField:
    """Differentiable scalar field h: R^n -> R.

    With ``traceable=True`` the callable is a jax expression; the gradient is
    ``grad_fn`` when supplied, otherwise automatic differentiation. With
    ``traceable=False`` the callable is plain numpy and the gradient falls back
    to :func:`gradient_fd` unless ``grad_fn`` is given.
    """

    def __init__(self, name: str, fn: Callable, grad_fn: Callable | None = None, traceable: bool = True):
        self.name = name
        self.fn = fn
        self.traceable = traceable
        self.analytic = grad_fn is not None
        if traceable:
            self.grad_fn = grad_fn if grad_fn is not None else jax.grad(fn)
            self._value = jax.jit(fn)
            self._grad = jax.jit(self.grad_fn)
            self._vg = jax.jit(lambda x: (fn(x), self.grad_fn(x)))
        else:
            self.grad_fn = grad_fn
        self._lie_cache: dict[int, Callable] = {}

    def __repr__(self):
        return f"ScalarField({self.name!r})"

    def __call__(self, x) -> float:
        return self.value(x)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self._value(x)) if self.traceable else float(self.fn(x))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.traceable:
            return np.asarray(self._grad(x))
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(x), dtype=float)
        return gradient_fd(self.fn, x)

    def value_and_grad(self, x) -> tuple[float, np.ndarray]:
        if self.traceable:
            v, g = self._vg(np.asarray(x, dtype=float))
            return float(v), np.asarray(g)
        return self.value(x), self.gradient(x)

    def lie_fn(self, model: ControlAffineModel) -> Callable:
        """Jitted x -> (h, grad h, Lf h, Lg h) for ``model``."""
        key = id(model)
        if key not in self._lie_cache:
            if self.traceable:

                def lie(x):
                    h, g = self.fn(x), self.grad_fn(x)
                    return h, g, g @ model.drift_fn(x), g @ model.input_fn(x)

                jitted = jax.jit(lie)

                def call(x):
                    h, g, lf, lg = jitted(np.asarray(x, dtype=float))
                    return float(h), np.asarray(g), float(lf), np.asarray(lg)

            else:

                def call(x):
                    x = np.asarray(x, dtype=float)
                    h, g = self.value_and_grad(x)
                    f = np.asarray(model._jit["f"](x))
                    gm = np.asarray(model._jit["g"](x))
                    return h, g, float(g @ f), g @ gm

            self._lie_cache[key] = call
        return self._lie_cache[key]


def constant_field(c: float, n: int) -> ScalarField:
    return ScalarField(f"const({c})", lambda x: jnp.asarray(c, dtype=float) + 0.0 * x[0],
                       grad_fn=lambda x: jnp.zeros(n))


def lie_derivatives(model: ControlAffineModel, field: ScalarField, x) -> tuple[float, np.ndarray]:
    x = model.check_state(x)
    _, _, lf, lg = field.lie_fn(model)(x)
    return lf, lg


def worst_case_margin(model: ControlAffineModel, field: ScalarField, margin: ClassKFn, x) -> float:
    """inf over admissible u of Lf b + Lg b u + alpha(b), in closed form."""
    x = model.check_state(x)
    h, _, lf, lg = field.lie_fn(model)(x)
    return lf - model.input_set.support(lg) + float(margin(h))


def best_case_margin(model: ControlAffineModel, field: ScalarField, margin: ClassKFn, x) -> float:
    """sup over admissible u of Lf b + Lg b u + alpha(b), in closed form."""
    x = model.check_state(x)
    h, _, lf, lg = field.lie_fn(model)(x)
    return lf + model.input_set.support(lg) + float(margin(h))


def _next_level_traceable(model: ControlAffineModel, prev: ScalarField, margin: ClassKFn, name: str) -> ScalarField:
    fn_prev, grad_prev, uset = prev.fn, prev.grad_fn, model.input_set

    def level(x):
        g = grad_prev(x)
        lf = g @ model.drift_fn(x)
        lg = g @ model.input_fn(x)
        return lf - uset.support(lg, xp=jnp) + margin(fn_prev(x))

    return ScalarField(name, level)


def _next_level_fd(model: ControlAffineModel, prev: ScalarField, margin: ClassKFn, name: str) -> ScalarField:
    def level(x):
        h, g = prev.value_and_grad(x)
        lf = g @ np.asarray(model._jit["f"](x))
        lg = g @ np.asarray(model._jit["g"](x))
        return lf - model.input_set.support(lg) + float(margin(h))

    return ScalarField(name, level, traceable=False)


class BarrierChain:
    """Ordered fields b0..bN with margins alpha_0..alpha_{N-1} and terminal alpha_N."""

    def __init__(self, model: ControlAffineModel, fields: Sequence[ScalarField],
                 margins: Sequence[ClassKFn], terminal_margin: ClassKFn):
        if len(fields) != len(margins) + 1:
            raise ValueError("need exactly one margin per recursion step")
        self.model = model
        self.fields = list(fields)
        self.margins = list(margins)
        self.terminal_margin = terminal_margin
        self._values = None
        if all(f.traceable for f in self.fields):
            fns = [f.fn for f in self.fields]
            self._values = jax.jit(lambda x: jnp.stack([fn(x) for fn in fns]))

    @property
    def N(self) -> int:
        return len(self.fields) - 1

    @property
    def h0(self) -> ScalarField:
        return self.fields[0]

    @property
    def top(self) -> ScalarField:
        return self.fields[-1]

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._values is not None:
            return np.asarray(self._values(x))
        return np.array([f.value(x) for f in self.fields])

    def nonsmooth_levels(self, x, tol: float = 1e-12) -> list[int]:
        """Levels i < N whose input term |Lg b_i| vanishes at x (kink of b_{i+1})."""
        out = []
        for i, f in enumerate(self.fields[:-1]):
            _, _, _, lg = f.lie_fn(self.model)(x)
            if np.all(np.abs(lg) <= tol):
                out.append(i)
        return out


def build_iccbf_chain(model: ControlAffineModel, h0: ScalarField, margins: Sequence[ClassKFn],
                      N: int, terminal_margin: ClassKFn | None = None, gradient: str = "auto") -> BarrierChain:
    """b0 = h0, b_{i+1} = worst_case_margin(b_i, alpha_i)."""
    if N < 1 or len(margins) != N:
        raise ValueError("need N >= 1 and exactly N margins")
    if gradient not in ("auto", "fd"):
        raise ValueError("gradient must be 'auto' or 'fd'")
    use_fd = gradient == "fd" or not h0.traceable
    fields = [h0]
    for i, margin in enumerate(margins):
        step = _next_level_fd if use_fd else _next_level_traceable
        fields.append(step(model, fields[-1], margin, f"b{i + 1}[{h0.name}]"))
    return BarrierChain(model, fields, margins, terminal_margin or ClassKFn("linear", 1.0))


def chain_from_params(model: ControlAffineModel, h0: ScalarField, params: ChainParams) -> BarrierChain:
    margins = [ClassKFn(kind, k, p) for kind, k, p in
               zip(params.margin_kinds, params.margin_gains, params.margin_powers)]
    return build_iccbf_chain(model, h0, margins, params.levels,
                             ClassKFn(params.terminal_kind, params.terminal_gain))


@dataclass(frozen=True)
class Membership:
    in_S: bool
    in_Cstar: bool


def chain_membership(chain: BarrierChain, x) -> Membership:
    b = chain.values(x)
    return Membership(in_S=bool(b[0] >= 0), in_Cstar=bool(np.all(b >= 0)))


def iccbf_condition_check(chain: BarrierChain, x) -> bool:
    return best_case_margin(chain.model, chain.top, chain.terminal_margin, x) >= 0


@dataclass(frozen=True)
class ClfSpec:
    field: ScalarField
    margin: ClassKFn


# --------------------------------------------------------------------------
# scenario fields (closed form with analytic gradients)


def cruise_h0(params: CruiseParams = CruiseParams()) -> ScalarField:
    s = params.slope
    return ScalarField("cruise_h0", lambda x: x[0] - s * x[1],
                       grad_fn=lambda x: jnp.array([1.0, -s]) + 0.0 * x)


def cruise_clf(params: CruiseParams = CruiseParams(), beta: float = 1.0) -> ClfSpec:
    vmax = params.v_max
    field = ScalarField("cruise_clf", lambda x: (x[1] - vmax) ** 2,
                        grad_fn=lambda x: jnp.stack([0.0 * x[0], 2.0 * (x[1] - vmax)]))
    return ClfSpec(field, ClassKFn("linear", beta))


def _port_geometry(x, rho):
    c, s = jnp.cos(x[4]), jnp.sin(x[4])
    rx, ry = x[0] - rho * c, x[1] - rho * s
    return c, s, rx, ry


def docking_h0(params: DockingParams = DockingParams()) -> ScalarField:
    rho, cg = params.rho, math.cos(params.gamma)

    def h(x):
        c, s, rx, ry = _port_geometry(x, rho)
        return (rx * c + ry * s) / jnp.sqrt(rx * rx + ry * ry) - cg

    def grad(x):
        c, s, rx, ry = _port_geometry(x, rho)
        q = jnp.sqrt(rx * rx + ry * ry)
        dot = rx * c + ry * s
        dpx = c / q - dot * rx / q**3
        dpy = s / q - dot * ry / q**3
        # d(r_cp)/dpsi = (rho s, -rho c); d(e)/dpsi = (-s, c)
        ddot = rho * s * c - rho * c * s + (-rx * s + ry * c)
        dq = (rx * rho * s - ry * rho * c) / q
        dpsi = ddot / q - dot * dq / q**2
        z = 0.0 * x[0]
        return jnp.stack([dpx, dpy, z, z, dpsi])

    return ScalarField("docking_h0", h, grad_fn=grad)


def docking_clf(params: DockingParams = DockingParams(), beta: float = 1.0) -> ClfSpec:
    rho, T = params.rho, params.clf_time_constant

    def v(x):
        _, _, rx, ry = _port_geometry(x, rho)
        return (x[2] + rx / T) ** 2 + (x[3] + ry / T) ** 2

    def grad(x):
        c, s, rx, ry = _port_geometry(x, rho)
        a, b = x[2] + rx / T, x[3] + ry / T
        dpsi = 2 * a * rho * s / T - 2 * b * rho * c / T
        return jnp.stack([2 * a / T, 2 * b / T, 2 * a, 2 * b, dpsi])

    return ClfSpec(ScalarField("docking_clf", v, grad_fn=grad), ClassKFn("linear", beta))


def _zone_denominator(params: InspectionParams) -> float:
    return params.r_kiz**2 - params.r_koz**2


def koz_h0(params: InspectionParams = InspectionParams()) -> ScalarField:
    D, rk2 = _zone_denominator(params), params.r_koz**2

    def grad(x):
        return jnp.concatenate([2.0 * x[:3] / D, 0.0 * x[3:]])

    return ScalarField("koz_h0", lambda x: (x[0] ** 2 + x[1] ** 2 + x[2] ** 2 - rk2) / D, grad_fn=grad)


def kiz_h0(params: InspectionParams = InspectionParams()) -> ScalarField:
    D, rk2 = _zone_denominator(params), params.r_kiz**2

    def grad(x):
        return jnp.concatenate([-2.0 * x[:3] / D, 0.0 * x[3:]])

    return ScalarField("kiz_h0", lambda x: (rk2 - x[0] ** 2 - x[1] ** 2 - x[2] ** 2) / D, grad_fn=grad)
