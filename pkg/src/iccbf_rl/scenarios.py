"""Initial-state sets, D/E splitting and the inspection observability metric."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .barrier import BarrierChain
from .config import CruiseParams, DockingParams, InspectionParams

TAGS = ("D", "E", "unsafe")


@dataclass
class InitialGrid:
    states: np.ndarray  # (N, n)
    labels: tuple[str, ...]
    tags: list[str] | None = None

    def __len__(self) -> int:
        return self.states.shape[0]

    def subset(self, tag: str) -> np.ndarray:
        if self.tags is None:
            raise ValueError("grid has not been tagged; call split_D_E first")
        idx = [i for i, t in enumerate(self.tags) if t == tag]
        return self.states[idx]

    def indices(self, tag: str) -> list[int]:
        return [i for i, t in enumerate(self.tags or []) if t == tag]

    def counts(self) -> dict[str, int]:
        return {t: (self.tags or []).count(t) for t in TAGS}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.labels, "tag"])
            for i, x in enumerate(self.states):
                w.writerow([repr(float(v)) for v in x] + [self.tags[i] if self.tags else ""])


def cruise_grid(params: CruiseParams = CruiseParams()) -> InitialGrid:
    """d in {0, 10, ..., 120} x v in {0, 1, ..., v_max}: 13 x 25 = 325 points."""
    ds = np.arange(0.0, 121.0, 10.0)
    vs = np.arange(0.0, math.floor(params.v_max) + 1.0)
    states = np.array([[d, v] for d in ds for v in vs])
    return InitialGrid(states, ("d", "v"))


def split_D_E(grid: InitialGrid, chain: BarrierChain) -> InitialGrid:
    """D: every chain level >= 0; E: h0 >= 0 but some higher level < 0."""
    tags = []
    for x in grid.states:
        b = chain.values(x)
        if b[0] < 0:
            tags.append("unsafe")
        elif np.all(b >= 0):
            tags.append("D")
        else:
            tags.append("E")
    return InitialGrid(grid.states.copy(), grid.labels, tags)


def docking_initials(params: DockingParams = DockingParams(), n: int = 100,
                     literal_offset: bool = False) -> InitialGrid:
    """States at x1 = standoff spread over cone angles -gamma..gamma.

    The lateral offset is measured from the docking port, (x1 - rho) tan(theta),
    so both end points sit exactly on the cone boundary. ``literal_offset``
    uses x1 / tan(theta) instead.
    """
    g = params.gamma
    thetas = -g + 2.0 * g * np.arange(n) / (n - 1)
    x1 = params.standoff
    states = np.zeros((n, 5))
    states[:, 0] = x1
    if literal_offset:
        with np.errstate(divide="ignore"):
            states[:, 1] = x1 / np.tan(thetas)
    else:
        states[:, 1] = (x1 - params.rho) * np.tan(thetas)
    return InitialGrid(states, ("p_x", "p_y", "v_x", "v_y", "psi"))


def inspection_initials(r0_values: Sequence[float] | None = None,
                        params: InspectionParams = InspectionParams()) -> InitialGrid:
    """x0 = [r0, 0, 0, 0, -2 n r0, vz0]; default r0 spans [r_min, r_max] in 100 points."""
    if r0_values is None:
        r0_values = np.linspace(params.r_min, params.r_max, 100)
    r0 = np.asarray(r0_values, dtype=float)
    n = params.mean_motion
    states = np.zeros((r0.size, 6))
    states[:, 0] = r0
    states[:, 4] = -2.0 * n * r0
    states[:, 5] = params.vz0
    return InitialGrid(states, ("p_x", "p_y", "p_z", "v_x", "v_y", "v_z"))


def mean_h0(grid: InitialGrid, h0, tag: str | None = "E") -> float:
    """Mean of h0 over the tagged subset (all points when ``tag`` is None or the subset is empty)."""
    pts = grid.states if tag is None else grid.subset(tag)
    if len(pts) == 0:
        pts = grid.states
    return float(np.mean([h0(x) for x in pts]))


# --------------------------------------------------------------------------
# inspection metric


def sun_direction_lvlh(t, params: InspectionParams = InspectionParams()) -> np.ndarray:
    """Inertially fixed Sun unit vector expressed in the LVLH frame at time t.

    LVLH rotates about its z axis (orbit normal) at the mean motion, so the
    inertial vector is rotated by -n t.
    """
    s = np.asarray(params.sun_direction, dtype=float)
    s = s / np.linalg.norm(s)
    t = np.asarray(t, dtype=float)
    c, sn = np.cos(params.mean_motion * t), np.sin(params.mean_motion * t)
    out = np.stack([c * s[0] + sn * s[1], -sn * s[0] + c * s[1], np.broadcast_to(s[2], c.shape)], axis=-1)
    return out


def gamma_angle(x, t, params: InspectionParams = InspectionParams()) -> np.ndarray:
    """Angle at the RSO between the Sun direction and the RSO->chaser vector."""
    x = np.asarray(x, dtype=float)
    p = x[..., :3]
    s = sun_direction_lvlh(t, params)
    # atan2 keeps full precision near 0 and pi, where arccos does not
    return np.arctan2(np.linalg.norm(np.cross(p, s), axis=-1), np.sum(p * s, axis=-1))


def distance_weight(r_c, r_min: float = 50.0, r_max: float = 300.0):
    r_c = np.asarray(r_c, dtype=float)
    with np.errstate(divide="ignore"):
        far = (r_max / r_c) ** 3
    return np.where(r_c < r_min, r_c / r_min, np.where(r_c <= r_max, 1.0, far))


def score_integrand(times, states, params: InspectionParams = InspectionParams()) -> np.ndarray:
    r = np.linalg.norm(np.asarray(states)[..., :3], axis=-1)
    f = distance_weight(r, params.r_min, params.r_max)
    return params.omega_gamma * f * (np.pi - gamma_angle(states, times, params)) / np.pi


def inspection_score_increment(times, states, params: InspectionParams = InspectionParams()) -> float:
    """Composite trapezoid of omega * f(t) (pi - gamma(t)) / pi over the given nodes."""
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        return 0.0
    y = score_integrand(times, states, params)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(times)))
