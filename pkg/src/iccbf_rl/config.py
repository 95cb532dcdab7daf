"""Scenario constant records and the YAML scenario config file.

Every physical constant is stored in SI units (m, s, kg, N, rad). The
config file is flat key/value per scenario, e.g.::

    cruise:
      mass: 1650.0
      v_max: 24.0
    docking:
      omega_deg: 0.6

Keys that are absent fall back to the defaults below.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

MU_EARTH = 3.986e14  # m^3/s^2 (398600 km^3/s^2)
R_TARGET = 6.771e6  # m (6771 km)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CruiseParams:
    mass: float = 1650.0
    g0: float = 9.81
    f0: float = 0.1
    f1: float = 5.0
    f2: float = 0.25
    v0: float = 13.89
    v_max: float = 24.0
    slope: float = 1.8
    u_max: float = 0.25
    dt: float = 0.1
    t_final: float = 20.0

    def validate(self) -> None:
        if self.mass <= 0 or self.g0 <= 0 or self.u_max <= 0:
            raise ConfigError("cruise: mass, g0 and u_max must be positive")
        if self.slope <= 0 or self.v_max <= 0:
            raise ConfigError("cruise: slope and v_max must be positive")
        _check_horizon("cruise", self.dt, self.t_final)


@dataclass(frozen=True)
class DockingParams:
    orbit_radius: float = R_TARGET
    mu: float = MU_EARTH
    mass: float = 1000.0
    omega_deg: float = 0.6
    rho: float = 2.4
    gamma_deg: float = 10.0
    u_max: float = 250.0
    clf_time_constant: float = 10.0
    standoff: float = 500.0
    dt: float = 0.5
    t_final: float = 50.0
    dock_threshold: float = 5e-5

    @property
    def mean_motion(self) -> float:
        return math.sqrt(self.mu / self.orbit_radius**3)

    @property
    def omega(self) -> float:
        return math.radians(self.omega_deg)

    @property
    def gamma(self) -> float:
        return math.radians(self.gamma_deg)

    def validate(self) -> None:
        if min(self.orbit_radius, self.mu, self.mass, self.u_max, self.rho) <= 0:
            raise ConfigError("docking: radius, mu, mass, u_max and rho must be positive")
        if not 0 < self.gamma_deg < 90:
            raise ConfigError("docking: cone half-angle must lie in (0, 90) deg")
        if self.standoff <= self.rho:
            raise ConfigError("docking: standoff must exceed the port radius")
        _check_horizon("docking", self.dt, self.t_final)


@dataclass(frozen=True)
class InspectionParams:
    orbit_radius: float = R_TARGET
    mu: float = MU_EARTH
    mass: float = 50.0
    u_max: float = 0.05
    r_kiz: float = 1200.0
    r_koz: float = 15.0
    r_min: float = 50.0
    r_max: float = 300.0
    mission_hours: float = 48.0
    dv_min: float = 0.003
    dv_max: float = 0.090
    coast_min_hours: float = 1.0
    coast_max_hours: float = 3.0
    omega_gamma: float = 1.0
    sun_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    vz0: float = 0.431
    coast_step: float = 60.0
    burn_substeps: int = 10

    @property
    def mean_motion(self) -> float:
        return math.sqrt(self.mu / self.orbit_radius**3)

    @property
    def burn_min(self) -> float:
        return self.dv_min / (self.u_max / self.mass)

    @property
    def burn_max(self) -> float:
        return self.dv_max / (self.u_max / self.mass)

    @property
    def coast_min(self) -> float:
        return self.coast_min_hours * 3600.0

    @property
    def coast_max(self) -> float:
        return self.coast_max_hours * 3600.0

    @property
    def mission_time(self) -> float:
        return self.mission_hours * 3600.0

    def validate(self) -> None:
        if not self.r_koz < self.r_min < self.r_max < self.r_kiz:
            raise ConfigError("inspection: need r_koz < r_min < r_max < r_kiz")
        if not 0 < self.dv_min < self.dv_max:
            raise ConfigError("inspection: need 0 < dv_min < dv_max")
        if not 0 < self.coast_min_hours <= self.coast_max_hours:
            raise ConfigError("inspection: bad coast bounds")
        if min(self.mass, self.u_max, self.mu, self.orbit_radius) <= 0:
            raise ConfigError("inspection: mass, u_max, mu and radius must be positive")
        if math.hypot(*self.sun_direction) == 0:
            raise ConfigError("inspection: sun_direction must be nonzero")


@dataclass(frozen=True)
class ChainParams:
    """Barrier-chain and fixed-gain settings for one scenario."""

    levels: int = 2
    margin_kinds: tuple[str, ...] = ("linear", "linear")
    margin_gains: tuple[float, ...] = (4.0, 7.0)
    margin_powers: tuple[float, ...] = (1.0, 1.0)
    terminal_kind: str = "linear"
    terminal_gain: float = 1.0
    baseline_alpha: float = 1.0
    baseline_beta: float = 1.0

    def validate(self) -> None:
        if self.levels < 1:
            raise ConfigError("chain: levels must be >= 1")
        if not (len(self.margin_kinds) == len(self.margin_gains) == len(self.margin_powers) == self.levels):
            raise ConfigError("chain: need one margin kind/gain/power per level")
        if min(self.margin_gains) <= 0 or self.terminal_gain <= 0:
            raise ConfigError("chain: class-K gains must be positive")


@dataclass(frozen=True)
class QpParams:
    p1: float = 1e3
    p2: float = 1e3
    p3: float = 1e3
    tol: float = 1e-8
    max_iter: int = 20000

    def validate(self) -> None:
        if min(self.p1, self.p2, self.p3) <= 0:
            raise ConfigError("qp: slack penalties must be positive")


@dataclass(frozen=True)
class RewardParams:
    c_h: float = 100.0
    c_u: float = 1.0
    c_h1: float = 1.0
    c_h2: float = 1.0
    c_i: float = 0.1
    inspection_bonus: bool = True


@dataclass(frozen=True)
class ActionBounds:
    alpha_min: float = 0.1
    alpha_max: float = 10.0
    beta_min: float = 0.1
    beta_max: float = 10.0

    def validate(self) -> None:
        if not (0 < self.alpha_min < self.alpha_max and 0 < self.beta_min < self.beta_max):
            raise ConfigError("action bounds must satisfy 0 < min < max")


@dataclass(frozen=True)
class Config:
    cruise: CruiseParams = field(default_factory=CruiseParams)
    docking: DockingParams = field(default_factory=DockingParams)
    inspection: InspectionParams = field(default_factory=InspectionParams)
    cruise_chain: ChainParams = field(default_factory=ChainParams)
    # the (4, 7) gains leave no control-invariant inner set for the rotating cone;
    # these keep every D start safe under the baseline
    docking_chain: ChainParams = field(default_factory=lambda: ChainParams(margin_gains=(0.05, 2.0)))
    inspection_chain: ChainParams = field(
        default_factory=lambda: ChainParams(baseline_alpha=1.0, baseline_beta=1.0)
    )
    qp: QpParams = field(default_factory=QpParams)
    reward: RewardParams = field(default_factory=RewardParams)
    actions: ActionBounds = field(default_factory=ActionBounds)

    def validate(self) -> "Config":
        for f in dataclasses.fields(self):
            sub = getattr(self, f.name)
            if hasattr(sub, "validate"):
                sub.validate()
        return self

    def chain_for(self, scenario: str) -> ChainParams:
        return getattr(self, f"{scenario}_chain")

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            sub = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sub.items()}
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _check_horizon(name: str, dt: float, t_final: float) -> None:
    if dt <= 0 or t_final <= 0:
        raise ConfigError(f"{name}: dt and t_final must be positive")
    ratio = t_final / dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ConfigError(f"{name}: t_final must be a multiple of dt")


def _build(cls, values: dict[str, Any] | None, section: str):
    values = dict(values or {})
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    for key, val in values.items():
        if isinstance(val, list):
            values[key] = tuple(val)
    return cls(**values)


def config_from_dict(data: dict[str, Any] | None) -> Config:
    data = data or {}
    kinds = {f.name: f.default_factory for f in dataclasses.fields(Config)}
    unknown = set(data) - set(kinds)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {}
    for name, factory in kinds.items():
        cls = type(factory())
        base = dataclasses.asdict(factory())
        base.update(data.get(name) or {})
        sections[name] = _build(cls, base, name)
    return Config(**sections).validate()


def load_config(path: str | Path | None = None) -> Config:
    """Read a YAML scenario config; ``None`` gives the defaults."""
    if path is None:
        return Config().validate()
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(cfg: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
