"""Small dense tanh networks with hand-written reverse passes.

Layers compute ``y = x @ W + b``; hidden layers use tanh, the output layer
is linear. ``forward`` accepts a single input (1-D) or a batch (2-D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_VERSION = 1


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Dense network with tanh hidden layers and a linear output layer."""

    def __init__(self, layer_sizes: Sequence[int], rng: np.random.Generator | None = None,
                 hidden_gain: float = 5.0 / 3.0, output_gain: float = 0.01,
                 heads: dict[str, slice] | None = None):
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError("need at least input and output sizes, all >= 1")
        self.layer_sizes = [int(s) for s in layer_sizes]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        n_layers = len(self.layer_sizes) - 1
        for k in range(n_layers):
            gain = output_gain if k == n_layers - 1 else hidden_gain
            shape = (self.layer_sizes[k], self.layer_sizes[k + 1])
            self.weights.append(orthogonal(shape, gain, rng))
            self.biases.append(np.zeros(shape[1]))
        self.heads = dict(heads or {})

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def head(self, name: str) -> slice:
        return self.heads[name]

    # -- flat parameter vector ------------------------------------------

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("non-finite parameters")
        i = 0
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[k] = theta[i:i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[k] = theta[i:i + b.size].copy()
            i += b.size

    def copy(self) -> "Mlp":
        net = Mlp.__new__(Mlp)
        net.layer_sizes = list(self.layer_sizes)
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        net.heads = dict(self.heads)
        return net

    # -- passes -----------------------------------------------------------

    def forward_cached(self, x) -> tuple[np.ndarray, list[np.ndarray]]:
        """Output plus the list of layer inputs needed by :meth:`backward`."""
        a = np.asarray(x, dtype=float)
        acts = [a]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if k == last else np.tanh(z)
            acts.append(a)
        return a, acts

    def forward(self, x) -> np.ndarray:
        return self.forward_cached(x)[0]

    __call__ = forward

    def backward(self, acts: list[np.ndarray], grad_out) -> tuple[np.ndarray, np.ndarray]:
        """Reverse pass: (flat parameter gradient, input gradient) of sum(grad_out * y)."""
        g = np.asarray(grad_out, dtype=float)
        grads_w: list[np.ndarray] = [None] * len(self.weights)  # type: ignore[list-item]
        grads_b: list[np.ndarray] = [None] * len(self.weights)  # type: ignore[list-item]
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            if k != last:
                g = g * (1.0 - acts[k + 1] ** 2)
            a_in = acts[k]
            if a_in.ndim == 1:
                grads_w[k] = np.outer(a_in, g)
                grads_b[k] = g.copy()
            else:
                grads_w[k] = a_in.T @ g
                grads_b[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts += [gw.ravel(), gb]
        return np.concatenate(parts), g

    def param_gradient(self, x, loss_adjoint) -> np.ndarray:
        """Gradient of sum(loss_adjoint * forward(x)) w.r.t. the flat parameters."""
        _, acts = self.forward_cached(x)
        return self.backward(acts, loss_adjoint)[0]

    def input_gradient(self, x, head_index: int = 0) -> np.ndarray:
        """d forward(x)[head_index] / dx for a single input vector."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("input_gradient takes a single input vector")
        _, acts = self.forward_cached(x)
        e = np.zeros(self.n_out)
        e[head_index] = 1.0
        return self.backward(acts, e)[1]

    def lipschitz_bound(self) -> float:
        """Product of layer spectral norms (tanh is 1-Lipschitz)."""
        return float(np.prod([np.linalg.norm(w, 2) for w in self.weights]))

    # -- checkpoints --------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {
            "version": np.array(CHECKPOINT_VERSION),
            "layer_sizes": np.asarray(self.layer_sizes, dtype=np.int64),
            "params": self.get_flat(),
        }

    @classmethod
    def from_state(cls, state) -> "Mlp":
        version = int(state["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        net = cls([int(s) for s in state["layer_sizes"]])
        net.set_flat(state["params"])
        return net

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, **self.state_dict())

    @classmethod
    def load(cls, path: str | Path) -> "Mlp":
        with np.load(path) as data:
            return cls.from_state(data)


def naive_forward(net: Mlp, x) -> np.ndarray:
    """Straight-line scalar-loop evaluator, kept as an independent check of :meth:`Mlp.forward`."""
    a = [float(v) for v in np.asarray(x, dtype=float)]
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += a[i] * w[i, j]
            out.append(s if k == last else math.tanh(s))
        a = out
    return np.asarray(a)


# --------------------------------------------------------------------------
# bounded action decoding


def squash(raw, lo: float, hi: float):
    """lo + 0.5 (tanh(raw) + 1)(hi - lo)."""
    return lo + 0.5 * (np.tanh(raw) + 1.0) * (hi - lo)


def squash_log(raw, lo: float, hi: float):
    """Geometric counterpart of :func:`squash`: raw = 0 maps to sqrt(lo hi)."""
    return np.exp(squash(raw, math.log(lo), math.log(hi)))


@dataclass(frozen=True)
class BoundedActionMap:
    """Per-component (lo, hi) decoding of raw policy outputs."""

    bounds: tuple[tuple[float, float], ...]
    log_scale: tuple[bool, ...] = ()

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"action bounds must satisfy lo < hi, got ({lo}, {hi})")
        if self.log_scale:
            if len(self.log_scale) != len(self.bounds):
                raise ValueError("log_scale needs one flag per bound")
            for (lo, _), flag in zip(self.bounds, self.log_scale):
                if flag and lo <= 0:
                    raise ValueError("log-scaled bounds must be positive")

    def __len__(self) -> int:
        return len(self.bounds)

    def __call__(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.shape[-1] != len(self.bounds):
            raise ValueError(f"expected {len(self.bounds)} raw actions, got {raw.shape[-1]}")
        out = np.empty_like(raw)
        flags = self.log_scale or (False,) * len(self.bounds)
        for i, ((lo, hi), flag) in enumerate(zip(self.bounds, flags)):
            out[..., i] = squash_log(raw[..., i], lo, hi) if flag else squash(raw[..., i], lo, hi)
        return out
