"""Controller strategies, Monte-Carlo benchmark runs, statistics and data export.

Run directories contain::

    manifest.json            config digest, seed, version, counts, timing
    episodes.csv             one row per episode (EPISODE_COLUMNS)
    stats.csv                one row per strategy (STATS_COLUMNS)
    trajectories/<id>.csv    per-step trace (TRAJECTORY_COLUMNS + state/control labels)
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .barrier import chain_membership, iccbf_condition_check
from .config import Config
from .env import BarrierHead, BenchmarkEnv, EnvConfig, InspectionEnv, StepResult, dispatch
from .ppo import GaussianPolicy
from .scenarios import InitialGrid, inspection_initials

STRATEGIES = ("iccbf", "stage1", "stage1_2", "inspection_baseline", "inspection_rl")
FALLBACK_RESIDUAL = -0.1  # raw head value of the hand-tuned stage-2 fallback

EPISODE_COLUMNS = ("id", "scenario", "strategy", "tag", "steps", "fuel", "min_h0", "success", "docked",
                   "violations", "stage2_steps", "qp_non_optimal", "inspection_score")
STATS_COLUMNS = ("strategy", "subset", "count", "successes", "success_pct", "metric", "mean", "std",
                 "q1", "q2", "q3", "p99", "median_change_pct")
TRAJECTORY_COLUMNS = ("step", "t", "stage", "h0", "qp_status", "qp_iterations")


def fmt(v) -> str:
    """Stable text form for floats written to CSV."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.10g}"


# --------------------------------------------------------------------------
# records and statistics


@dataclass
class EpisodeRecord:
    id: str
    scenario: str
    strategy: str
    tag: str
    x0: np.ndarray
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    controls: list[np.ndarray] = field(default_factory=list)
    h0: list[float] = field(default_factory=list)
    stages: list[int] = field(default_factory=list)
    qp_status: list[str] = field(default_factory=list)
    qp_iterations: list[int] = field(default_factory=list)
    qp_times: list[float] = field(default_factory=list)
    fuel: float = 0.0
    docked: bool = False
    inspection_score: float = float("nan")
    violations: int = 0

    @property
    def steps(self) -> int:
        return len(self.controls)

    @property
    def min_h0(self) -> float:
        return float(min(self.h0)) if self.h0 else float("nan")

    @property
    def success(self) -> bool:
        return bool(self.h0) and self.min_h0 >= 0.0 and self.violations == 0

    def row(self) -> list[str]:
        vals = (self.id, self.scenario, self.strategy, self.tag, self.steps, self.fuel, self.min_h0, self.success,
                self.docked, self.violations, sum(1 for s in self.stages if s == 2),
                sum(1 for s in self.qp_status if s != "optimal"), self.inspection_score)
        return [fmt(v) for v in vals]


@dataclass
class SummaryStats:
    count: int
    successes: int
    mean: float
    std: float
    q1: float
    q2: float
    q3: float
    p99: float

    @property
    def success_pct(self) -> float:
        return 100.0 * self.successes / self.count if self.count else float("nan")


def summarize(values: Sequence[float], successes: int | None = None) -> SummaryStats:
    """Sample mean/std (ddof=1) and type-7 (linear interpolation) quantiles."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        nan = float("nan")
        return SummaryStats(0, 0, nan, nan, nan, nan, nan, nan)
    q = np.quantile(x, [0.25, 0.5, 0.75, 0.99], method="linear")
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return SummaryStats(int(x.size), int(x.size if successes is None else successes), float(np.mean(x)), std,
                        *map(float, q))


def stats(records: Sequence[EpisodeRecord], metric: str = "fuel") -> SummaryStats:
    vals = [getattr(r, metric) for r in records]
    return summarize(vals, sum(r.success for r in records))


# --------------------------------------------------------------------------
# controllers


@dataclass
class Strategy:
    id: str
    stage1_checkpoint: str | None = None
    stage2_checkpoint: str | None = None
    alpha: float | None = None  # fixed gains (None: scenario baseline)
    beta: float | None = None
    fallback_residual: float = FALLBACK_RESIDUAL

    def __post_init__(self):
        if self.id not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.id!r}; expected one of {STRATEGIES}")
        if self.id == "stage1" and not self.stage1_checkpoint:
            raise ValueError("strategy 'stage1' needs a stage-1 checkpoint")
        if self.id == "inspection_rl" and not self.stage1_checkpoint:
            raise ValueError("strategy 'inspection_rl' needs a stage-1 checkpoint")
        self.policy1 = GaussianPolicy.load(self.stage1_checkpoint) if self.stage1_checkpoint else None
        self.policy2 = GaussianPolicy.load(self.stage2_checkpoint) if self.stage2_checkpoint else None


class Controller:
    """Maps the environment's current state to one environment step."""

    def __init__(self, strategy: Strategy, env, cfg: Config):
        self.s, self.env, self.cfg = strategy, env, cfg
        sc = env.env_cfg.scenario
        chain = cfg.chain_for(sc)
        self.alpha = strategy.alpha if strategy.alpha is not None else chain.baseline_alpha
        self.beta = strategy.beta if strategy.beta is not None else chain.baseline_beta
        if strategy.policy2 is not None:
            env.set_barrier_head(BarrierHead.from_policy(strategy.policy2))
        else:
            env.set_barrier_head(BarrierHead(constant=strategy.fallback_residual))
        self._check_dims()

    def _check_dims(self):
        p1, p2, env = self.s.policy1, self.s.policy2, self.env
        if p1 is not None and p1.obs_dim != env.observe(stage=1).size:
            raise ValueError("stage-1 checkpoint does not match the scenario observation size")
        if p2 is not None and p2.obs_dim != env.observe(stage=2).size:
            raise ValueError("stage-2 checkpoint does not match the scenario observation size")

    def _stage2_action(self) -> np.ndarray:
        env = self.env
        if self.s.policy2 is not None:
            return self.s.policy2.mean(env.observe(stage=2))
        if isinstance(env, InspectionEnv):
            a = np.zeros(8)
            a[0] = self.s.fallback_residual
            a[7] = -30.0  # no enhancement thrust
            return a
        return np.array([self.s.fallback_residual, 0.0, 0.0])

    def step(self) -> StepResult:
        env, sid = self.env, self.s.id
        if sid == "iccbf":
            return env.step_with_gains(self.alpha, self.beta)
        if sid == "stage1":
            return env.step_stage1(self.s.policy1.mean(env.observe(stage=1)))
        if sid == "inspection_baseline":
            return env.step_explicit((self.alpha, self.alpha), 0.0, 0.0, np.zeros(3), stage=1)
        # two-stage dispatch
        in_cstar = env.in_cstar(env.x) if isinstance(env, InspectionEnv) else \
            dispatch(env.chain, env.x) == "stage1"
        if in_cstar:
            if self.s.policy1 is not None:
                return env.step_stage1(self.s.policy1.mean(env.observe(stage=1)))
            if isinstance(env, InspectionEnv):
                return env.step_explicit((self.alpha, self.alpha), 0.0, 0.0, np.zeros(3), stage=1)
            return env.step_with_gains(self.alpha, self.beta)
        return env.step_stage2(self._stage2_action())


# --------------------------------------------------------------------------
# episodes


def simulate_episode(env, controller: Controller, x0, episode_id: str, tag: str = "",
                     max_steps: int = 100_000) -> EpisodeRecord:
    sc = env.env_cfg.scenario
    rec = EpisodeRecord(episode_id, sc, controller.s.id, tag, np.array(x0, dtype=float))
    env.reset(x0)
    h0_0 = env.zone_h0(env.x) if isinstance(env, InspectionEnv) else env.h0(env.x)
    rec.times.append(0.0)
    rec.states.append(env.x.copy())
    rec.h0.append(float(h0_0))
    rec.stages.append(0)
    for _ in range(max_steps):
        res = controller.step()
        info = res.info
        u = np.asarray(info["u"], dtype=float)
        rec.times.append(float(info["t"]))
        rec.states.append(np.asarray(info["x"]).copy())
        rec.controls.append(u)
        rec.stages.append(int(info["stage"]))
        rec.qp_status.append(info["qp_status"])
        rec.qp_iterations.append(int(info["qp_iterations"]))
        rec.qp_times.append(float(info["qp_time"]))
        if isinstance(env, InspectionEnv):
            rec.h0.append(float(info["h0_path_min"]))
            rec.fuel += float(info["impulse"])
        else:
            rec.h0.append(float(info["h0"]))
            rec.fuel += float(np.linalg.norm(u)) * env.dt
        rec.violations += int(info["violation"])
        rec.docked = rec.docked or bool(info.get("docked", False))
        if res.done:
            break
    if isinstance(env, InspectionEnv):
        rec.inspection_score = float(env.score)
    return rec


def write_trajectory(rec: EpisodeRecord, path: Path, state_labels: Sequence[str]) -> None:
    m = rec.controls[0].size if rec.controls else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*TRAJECTORY_COLUMNS[:2], *state_labels, *[f"u{i}" for i in range(m)], *TRAJECTORY_COLUMNS[2:]])
        for k, (t, x) in enumerate(zip(rec.times, rec.states)):
            u = rec.controls[k] if k < len(rec.controls) else np.full(m, np.nan)
            status = rec.qp_status[k] if k < len(rec.qp_status) else ""
            iters = rec.qp_iterations[k] if k < len(rec.qp_iterations) else 0
            w.writerow([fmt(k), fmt(t), *map(fmt, x), *map(fmt, u), fmt(rec.stages[k]), fmt(rec.h0[k]), status,
                        fmt(iters)])


def _run_many(make_env: Callable[[], Any], strategy: Strategy, cfg: Config, jobs: list[tuple[str, np.ndarray, str]],
              workers: int) -> list[EpisodeRecord]:
    def work(chunk):
        env = make_env()
        ctl = Controller(strategy, env, cfg)
        return [simulate_episode(env, ctl, x0, eid, tag) for eid, x0, tag in chunk]

    if workers <= 1:
        return work(jobs)
    chunks = [jobs[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(workers) as pool:
        done = list(pool.map(work, chunks))
    order = {eid: i for i, (eid, _, _) in enumerate(jobs)}
    return sorted((r for part in done for r in part), key=lambda r: order[r.id])


@dataclass
class RunResult:
    records: dict[str, list[EpisodeRecord]]
    stats: list[dict[str, str]]
    out_dir: Path | None


def _stats_rows(records: dict[str, list[EpisodeRecord]], metric: str, subsets: dict[str, Callable]) -> list[dict]:
    rows = []
    base = records.get("iccbf") or records.get("inspection_baseline")
    for sid, recs in records.items():
        for name, pick in subsets.items():
            sel = [r for r in recs if pick(r)]
            st = stats(sel, metric)
            change = float("nan")
            if base is not None:
                bq = stats([r for r in base if pick(r)], metric).q2
                if bq and np.isfinite(bq):
                    change = 100.0 * (st.q2 - bq) / bq
            vals = (sid, name, st.count, st.successes, st.success_pct, metric, st.mean, st.std, st.q1, st.q2, st.q3,
                    st.p99, change)
            rows.append(dict(zip(STATS_COLUMNS, map(fmt, vals))))
    return rows


def write_outputs(out: Path, records: dict[str, list[EpisodeRecord]], stat_rows: list[dict], labels, manifest,
                  trajectories: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*EPISODE_COLUMNS, *[f"x0_{l}" for l in labels]])
        for recs in records.values():
            for r in recs:
                w.writerow(r.row() + [fmt(v) for v in r.x0])
    with open(out / "stats.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STATS_COLUMNS)
        w.writeheader()
        w.writerows(stat_rows)
    if trajectories:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for recs in records.values():
            for r in recs:
                write_trajectory(r, tdir / f"{r.id}.csv", labels)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _manifest(cfg: Config, seed: int, scenario: str, strategies, records, wall: float) -> dict[str, Any]:
    qp = [t for recs in records.values() for r in recs for t in r.qp_times]
    return {
        "version": f"iccbf-rl {__version__}",
        "config_sha256": cfg.digest(),
        "seed": seed,
        "scenario": scenario,
        "strategies": [
            {"id": s.id, "stage1_checkpoint": s.stage1_checkpoint, "stage2_checkpoint": s.stage2_checkpoint}
            for s in strategies
        ],
        "episodes": {sid: len(recs) for sid, recs in records.items()},
        "median_qp_ms": float(np.median(qp) * 1e3) if qp else None,
        "wall_seconds": wall,
    }


def benchmark_env(cfg: Config, scenario: str, grid: InitialGrid | None = None) -> BenchmarkEnv:
    return BenchmarkEnv(cfg, EnvConfig(scenario, stage=2), grid=grid)


def run_benchmark(scenario: str, strategies: Sequence[Strategy], cfg: Config, out_dir: str | Path | None = None,
                  tags: Sequence[str] = ("D", "E", "unsafe"), seed: int = 0, workers: int = 1,
                  trajectories: bool = True, grid: InitialGrid | None = None) -> RunResult:
    """One episode per grid point with the requested tags, for each strategy."""
    t0 = time.perf_counter()
    probe = benchmark_env(cfg, scenario, grid)
    grid = probe.grid
    jobs = [(f"{scenario}-{i:04d}", grid.states[i], grid.tags[i]) for i in range(len(grid)) if grid.tags[i] in tags]
    records: dict[str, list[EpisodeRecord]] = {}
    for s in strategies:
        make = (lambda: probe) if workers <= 1 else (lambda: benchmark_env(cfg, scenario, grid))
        recs = _run_many(make, s, cfg, [(f"{s.id}-{eid}", x0, tag) for eid, x0, tag in jobs], workers)
        records[s.id] = recs
    subsets = {"all": lambda r: True, **{t: (lambda r, t=t: r.tag == t) for t in tags}}
    rows = _stats_rows(records, "fuel", subsets)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        write_outputs(out, records, rows, probe.model.labels,
                      _manifest(cfg, seed, scenario, strategies, records, time.perf_counter() - t0), trajectories)
    return RunResult(records, rows, out)


def run_inspection(strategies: Sequence[Strategy], cfg: Config, out_dir: str | Path | None = None,
                   initials: InitialGrid | None = None, seed: int = 0, workers: int = 1,
                   trajectories: bool = True) -> RunResult:
    """Full mission per initial state; statistics on the total inspection score."""
    t0 = time.perf_counter()
    initials = initials or inspection_initials(None, cfg.inspection)
    make = lambda: InspectionEnv(cfg, EnvConfig("inspection", stage=2), initial_states=initials.states)  # noqa: E731
    probe = make()
    tags = ["D" if probe.in_cstar(x) else "E" for x in initials.states]
    jobs = [(f"inspection-{i:04d}", initials.states[i], tags[i]) for i in range(len(initials))]
    records = {}
    for s in strategies:
        m = (lambda: probe) if workers <= 1 else make
        records[s.id] = _run_many(m, s, cfg, [(f"{s.id}-{eid}", x0, tag) for eid, x0, tag in jobs], workers)
    rows = _stats_rows(records, "inspection_score", {"all": lambda r: True})
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        write_outputs(out, records, rows, probe.model.labels,
                      _manifest(cfg, seed, "inspection", strategies, records, time.perf_counter() - t0), trajectories)
    return RunResult(records, rows, out)


# --------------------------------------------------------------------------
# feasibility raster

FEASIBILITY_COLUMNS = ("in_S", "in_Cstar", "residual", "iccbf_condition", "tag")


def feasibility_map(chain, grid: InitialGrid) -> list[dict[str, Any]]:
    rows = []
    for x in grid.states:
        b = chain.values(x)
        mem = chain_membership(chain, x)
        tag = "unsafe" if not mem.in_S else ("D" if mem.in_Cstar else "E")
        rows.append({"x": x.copy(), "b": b, "in_S": mem.in_S, "in_Cstar": mem.in_Cstar,
                     "residual": mem.in_S and not mem.in_Cstar, "iccbf_condition": iccbf_condition_check(chain, x),
                     "tag": tag})
    return rows


def write_feasibility_map(rows: list[dict[str, Any]], labels: Sequence[str], path: str | Path) -> None:
    n_levels = rows[0]["b"].size if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*labels, *[f"b{i}" for i in range(n_levels)], *FEASIBILITY_COLUMNS])
        for r in rows:
            w.writerow([*map(fmt, r["x"]), *map(fmt, r["b"]), fmt(r["in_S"]), fmt(r["in_Cstar"]), fmt(r["residual"]),
                        fmt(r["iccbf_condition"]), r["tag"]])


# --------------------------------------------------------------------------
# episode-level assertions and single-step filtering

CSTAR_SAFE_STRATEGIES = ("iccbf", "stage1")


def episode_assertions(records: dict[str, list[EpisodeRecord]]) -> list[str]:
    """Messages for every failed per-episode check (empty when all hold).

    Checks: fuel finite and non-negative; success agrees with the h0 trace;
    C*-starts stay safe under the fixed-gain and stage-1 controllers.
    """
    out = []
    for sid, recs in records.items():
        for r in recs:
            if not (np.isfinite(r.fuel) and r.fuel >= 0.0):
                out.append(f"{r.id}: fuel {r.fuel!r} is not a non-negative number")
            if r.success != (min(r.h0, default=-1.0) >= 0.0 and r.violations == 0):
                out.append(f"{r.id}: success flag disagrees with the h0 trace")
            if sid in CSTAR_SAFE_STRATEGIES and r.tag == "D" and not r.success:
                out.append(f"{r.id}: C* start left the safe set (min h0 {fmt(r.min_h0)})")
    return out


def safety_filter(env: BenchmarkEnv, x, alpha: float | None = None, beta: float | None = None) -> dict:
    """One fixed-gain filter solve at x followed by one hold interval; env state is restored."""
    chain = env.cfg.chain_for(env.env_cfg.scenario)
    saved = env.x, env.t, env.k
    try:
        env.reset(x)
        res = env.step_with_gains(chain.baseline_alpha if alpha is None else alpha,
                                  chain.baseline_beta if beta is None else beta)
    finally:
        env.x, env.t, env.k = saved
    info = res.info
    return {"u": info["u"], "h": info["h"], "V": info["V"], "qp_status": info["qp_status"],
            "qp_iterations": info["qp_iterations"], "x_next": info["x"], "h0_next": info["h0"],
            "region": dispatch(env.chain, np.asarray(x, dtype=float))}
