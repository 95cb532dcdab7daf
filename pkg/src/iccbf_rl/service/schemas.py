"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field, field_validator

Scenario = Literal["cruise", "docking", "inspection"]
Benchmark = Literal["cruise", "docking"]
StrategyId = Literal["iccbf", "stage1", "stage1_2", "inspection_baseline", "inspection_rl"]
Tag = Literal["D", "E", "unsafe"]


class ConfigRef(BaseModel):
    """Scenario config: a YAML path, inline section overrides, or both (inline wins)."""

    config_path: Optional[str] = None
    config: Optional[dict[str, dict[str, Any]]] = None


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str
    config_sha256: str


class TrainRequest(ConfigRef):
    scenario: Scenario
    stage: Literal[1, 2] = 1
    seed: int = 0
    total_steps: Optional[int] = Field(None, gt=0)
    out_dir: str
    resume: bool = False


class TrainResponse(BaseModel):
    out_dir: str
    checkpoint: str
    best_reward: float
    steps: int
    evaluations: int


class EvalRequest(ConfigRef):
    scenario: Scenario
    stage: Literal[1, 2] = 1
    checkpoint: str
    seed: int = 0
    episodes: int = Field(10, gt=0)


class EvalResponse(BaseModel):
    mean_reward: float
    returns: list[float]
    lengths: list[int]


class StrategySpec(BaseModel):
    id: StrategyId
    stage1_checkpoint: Optional[str] = None
    stage2_checkpoint: Optional[str] = None
    alpha: Optional[float] = Field(None, gt=0)
    beta: Optional[float] = Field(None, gt=0)


class BenchmarkRequest(ConfigRef):
    scenario: Benchmark
    strategies: list[StrategySpec] = Field(default_factory=lambda: [StrategySpec(id="iccbf")])
    tags: list[Tag] = Field(default_factory=lambda: ["D", "E", "unsafe"])
    seed: int = 0
    workers: int = Field(1, ge=1)
    trajectories: bool = True
    out_dir: Optional[str] = None

    @field_validator("strategies")
    @classmethod
    def _no_inspection(cls, v):
        if any(s.id.startswith("inspection") for s in v):
            raise ValueError("inspection strategies belong to the inspect endpoint")
        if len({s.id for s in v}) != len(v):
            raise ValueError("strategy ids must be unique")
        return v


class InspectRequest(ConfigRef):
    strategies: list[StrategySpec] = Field(default_factory=lambda: [StrategySpec(id="inspection_baseline")])
    r0_values: Optional[list[float]] = None
    seed: int = 0
    workers: int = Field(1, ge=1)
    trajectories: bool = True
    out_dir: Optional[str] = None

    @field_validator("strategies")
    @classmethod
    def _inspection_only(cls, v):
        if any(not s.id.startswith("inspection") for s in v):
            raise ValueError("only inspection strategies are valid here")
        return v


class RunResponse(BaseModel):
    out_dir: Optional[str]
    episodes: dict[str, int]
    stats: list[dict[str, str]]
    assertion_failures: list[str]


class FeasibilityRequest(ConfigRef):
    scenario: Benchmark
    out_path: Optional[str] = None


class FeasibilityResponse(BaseModel):
    path: Optional[str]
    counts: dict[str, int]
    rows: int


class FilterRequest(ConfigRef):
    scenario: Benchmark
    x: list[float]
    alpha: Optional[float] = Field(None, gt=0)
    beta: Optional[float] = Field(None, gt=0)


class FilterResponse(BaseModel):
    u: list[float]
    h: float
    V: float
    qp_status: str
    qp_iterations: int
    x_next: list[float]
    h0_next: float
    region: str
