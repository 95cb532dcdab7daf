"""FastAPI application exposing training, evaluation and benchmark runs.

Every route is a thin wrapper over a handler function of the same name, so
the CLI can call the handlers in-process or over HTTP with identical models.
"""

from __future__ import annotations

import threading
from functools import lru_cache

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import Config, ConfigError, config_from_dict, load_config
from ..env import BenchmarkEnv, EnvConfig, env_factory, make_env
from ..harness import (Strategy, episode_assertions, feasibility_map, run_benchmark, run_inspection,
                       safety_filter, write_feasibility_map)
from ..ppo import GaussianPolicy, evaluate, preset, train as ppo_train
from ..scenarios import inspection_initials
from .schemas import (BenchmarkRequest, ConfigRef, EvalRequest, EvalResponse, FeasibilityRequest,
                      FeasibilityResponse, FilterRequest, FilterResponse, HealthResponse, InspectRequest,
                      RunResponse, TrainRequest, TrainResponse)


def resolve_config(ref: ConfigRef) -> Config:
    cfg = load_config(ref.config_path)
    if not ref.config:
        return cfg
    merged = cfg.to_dict()
    for section, values in ref.config.items():
        merged.setdefault(section, {}).update(values)
    return config_from_dict(merged)


def _strategies(specs) -> list[Strategy]:
    return [Strategy(s.id, s.stage1_checkpoint, s.stage2_checkpoint, s.alpha, s.beta) for s in specs]


# environments are costly to build (chain compilation and grid split); keep one per config and scenario
_env_lock = threading.Lock()


@lru_cache(maxsize=8)
def _filter_env(digest: str, scenario: str, cfg: Config) -> BenchmarkEnv:
    return BenchmarkEnv(cfg, EnvConfig(scenario, stage=1))


# -- handlers ----------------------------------------------------------------


def health() -> HealthResponse:
    return HealthResponse(version=__version__, config_sha256=Config().digest())


def train(req: TrainRequest) -> TrainResponse:
    cfg = resolve_config(req)
    pcfg = preset(req.scenario, req.stage, req.total_steps)
    factory = env_factory(cfg, EnvConfig(req.scenario, stage=req.stage))
    res = ppo_train(factory, pcfg, req.seed, req.out_dir, resume=req.resume)
    return TrainResponse(out_dir=req.out_dir, checkpoint=f"{req.out_dir}/best.npz",
                         best_reward=res.best_reward, steps=res.steps, evaluations=len(res.curve))


def evaluate_policy(req: EvalRequest) -> EvalResponse:
    cfg = resolve_config(req)
    policy = GaussianPolicy.load(req.checkpoint)
    env = make_env(cfg, EnvConfig(req.scenario, stage=req.stage))
    if policy.obs_dim != env.obs_dim or policy.act_dim != env.act_dim:
        raise ValueError("checkpoint does not match the scenario/stage spaces")
    if hasattr(env, "set_policy_snapshot"):
        env.set_policy_snapshot(policy)
    env.seed(req.seed)
    ev = evaluate(policy, env, req.episodes, deterministic=True)
    return EvalResponse(mean_reward=ev.mean_reward, returns=ev.returns, lengths=ev.lengths)


def benchmark(req: BenchmarkRequest) -> RunResponse:
    cfg = resolve_config(req)
    res = run_benchmark(req.scenario, _strategies(req.strategies), cfg, req.out_dir, tags=tuple(req.tags),
                        seed=req.seed, workers=req.workers, trajectories=req.trajectories)
    return RunResponse(out_dir=req.out_dir, episodes={k: len(v) for k, v in res.records.items()},
                       stats=res.stats, assertion_failures=episode_assertions(res.records))


def inspect(req: InspectRequest) -> RunResponse:
    cfg = resolve_config(req)
    initials = inspection_initials(req.r0_values, cfg.inspection) if req.r0_values else None
    res = run_inspection(_strategies(req.strategies), cfg, req.out_dir, initials=initials, seed=req.seed,
                         workers=req.workers, trajectories=req.trajectories)
    return RunResponse(out_dir=req.out_dir, episodes={k: len(v) for k, v in res.records.items()},
                       stats=res.stats, assertion_failures=episode_assertions(res.records))


def feasibility(req: FeasibilityRequest) -> FeasibilityResponse:
    cfg = resolve_config(req)
    env = BenchmarkEnv(cfg, EnvConfig(req.scenario, stage=1))
    rows = feasibility_map(env.chain, env.grid)
    if req.out_path:
        write_feasibility_map(rows, env.model.labels, req.out_path)
    return FeasibilityResponse(path=req.out_path, counts=env.grid.counts(), rows=len(rows))


def filter_step(req: FilterRequest) -> FilterResponse:
    cfg = resolve_config(req)
    with _env_lock:
        env = _filter_env(cfg.digest(), req.scenario, cfg)
        if len(req.x) != env.model.n:
            raise ValueError(f"x must have {env.model.n} components")
        out = safety_filter(env, np.asarray(req.x, dtype=float), req.alpha, req.beta)
    return FilterResponse(**{k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in out.items()})


# -- routes ------------------------------------------------------------------

app = FastAPI(title="iccbf-rl", version=__version__)


def _call(fn, req):
    try:
        return fn(req)
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/health", response_model=HealthResponse)
def health_route():
    return health()


@app.post("/train", response_model=TrainResponse)
def train_route(req: TrainRequest):
    return _call(train, req)


@app.post("/eval", response_model=EvalResponse)
def eval_route(req: EvalRequest):
    return _call(evaluate_policy, req)


@app.post("/benchmark", response_model=RunResponse)
def benchmark_route(req: BenchmarkRequest):
    return _call(benchmark, req)


@app.post("/inspect", response_model=RunResponse)
def inspect_route(req: InspectRequest):
    return _call(inspect, req)


@app.post("/feasibility-map", response_model=FeasibilityResponse)
def feasibility_route(req: FeasibilityRequest):
    return _call(feasibility, req)


@app.post("/filter", response_model=FilterResponse)
def filter_route(req: FilterRequest):
    return _call(filter_step, req)
