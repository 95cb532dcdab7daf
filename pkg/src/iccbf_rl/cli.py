"""Command-line client.

Each subcommand builds a service request and either calls the handler
in-process or, with ``--server URL``, posts it to a running service.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from .service.schemas import (BenchmarkRequest, EvalRequest, EvalResponse, FeasibilityRequest, FeasibilityResponse,
                              FilterRequest, FilterResponse, InspectRequest, RunResponse, StrategySpec,
                              TrainRequest, TrainResponse)

log = logging.getLogger("iccbf_rl")

# subcommand -> (route, handler name, response model)
ROUTES = {
    "train": ("/train", "train", TrainResponse),
    "eval": ("/eval", "evaluate_policy", EvalResponse),
    "benchmark": ("/benchmark", "benchmark", RunResponse),
    "inspect": ("/inspect", "inspect", RunResponse),
    "feasibility-map": ("/feasibility-map", "feasibility", FeasibilityResponse),
    "filter": ("/filter", "filter_step", FilterResponse),
}


def _common(p: argparse.ArgumentParser, scenarios=("cruise", "docking", "inspection"), stage=False, out=True):
    if scenarios:
        p.add_argument("--scenario", choices=scenarios, required=True)
    if stage:
        p.add_argument("--stage", type=int, choices=(1, 2), default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="YAML scenario config (defaults built in)")
    if out:
        p.add_argument("--out", help="output directory")
    p.add_argument("--server", help="service base URL; runs in-process when omitted")
    p.add_argument("--strict", action="store_true", help="exit 1 when any episode-level assertion fails")


def _strategy_args(p: argparse.ArgumentParser, default: str):
    p.add_argument("--strategies", default=default, help="comma-separated strategy ids")
    p.add_argument("--stage1-checkpoint")
    p.add_argument("--stage2-checkpoint")
    p.add_argument("--alpha", type=float, help="fixed class-K gain for the baseline")
    p.add_argument("--beta", type=float, help="fixed CLF gain for the baseline")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-trajectories", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iccbf-rl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a stage-1 or stage-2 policy with PPO")
    _common(p, stage=True)
    p.add_argument("--steps", type=int, help="total environment steps")
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    _common(p, stage=True, out=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)

    p = sub.add_parser("benchmark", help="one episode per grid point for each strategy")
    _common(p, scenarios=("cruise", "docking"))
    _strategy_args(p, "iccbf")
    p.add_argument("--tags", default="D,E,unsafe")

    p = sub.add_parser("inspect", help="full inspection missions")
    _common(p, scenarios=None)
    _strategy_args(p, "inspection_baseline")
    p.add_argument("--r0", type=float, nargs="+", help="initial radial offsets [m]")

    p = sub.add_parser("feasibility-map", help="tag grid points as D / E / unsafe")
    _common(p, scenarios=("cruise", "docking"), out=False)
    p.add_argument("--out", help="CSV path")

    p = sub.add_parser("filter", help="one safety-filter solve at a state")
    _common(p, scenarios=("cruise", "docking"), out=False)
    p.add_argument("--x", type=float, nargs="+", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return ap


def _strategies(args) -> list[StrategySpec]:
    out = []
    for sid in filter(None, (s.strip() for s in args.strategies.split(","))):
        out.append(StrategySpec(
            id=sid,
            stage1_checkpoint=args.stage1_checkpoint if sid in ("stage1", "stage1_2", "inspection_rl") else None,
            stage2_checkpoint=args.stage2_checkpoint if sid in ("stage1_2", "inspection_rl") else None,
            alpha=args.alpha if sid in ("iccbf", "inspection_baseline") else None,
            beta=args.beta if sid == "iccbf" else None,
        ))
    return out


def build_request(args):
    ref = {"config_path": args.config}
    cmd = args.command
    if cmd == "train":
        if not args.out:
            raise SystemExit("train needs --out")
        return TrainRequest(scenario=args.scenario, stage=args.stage, seed=args.seed, total_steps=args.steps,
                            out_dir=args.out, resume=args.resume, **ref)
    if cmd == "eval":
        return EvalRequest(scenario=args.scenario, stage=args.stage, checkpoint=args.checkpoint, seed=args.seed,
                           episodes=args.episodes, **ref)
    if cmd == "benchmark":
        return BenchmarkRequest(scenario=args.scenario, strategies=_strategies(args),
                                tags=[t.strip() for t in args.tags.split(",") if t.strip()], seed=args.seed,
                                workers=args.workers, trajectories=not args.no_trajectories, out_dir=args.out, **ref)
    if cmd == "inspect":
        return InspectRequest(strategies=_strategies(args), r0_values=args.r0, seed=args.seed, workers=args.workers,
                              trajectories=not args.no_trajectories, out_dir=args.out, **ref)
    if cmd == "feasibility-map":
        return FeasibilityRequest(scenario=args.scenario, out_path=args.out, **ref)
    if cmd == "filter":
        return FilterRequest(scenario=args.scenario, x=args.x, alpha=args.alpha, beta=args.beta, **ref)
    raise ValueError(cmd)


def send(command: str, req, server: str | None):
    route, handler, model = ROUTES[command]
    if server is None:
        from .service import app as service
        return getattr(service, handler)(req)
    import httpx

    r = httpx.post(server.rstrip("/") + route, json=req.model_dump(mode="json"), timeout=None)
    if r.status_code != 200:
        raise RuntimeError(f"{route}: HTTP {r.status_code}: {r.text}")
    return model.model_validate(r.json())


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.command == "serve":
        import uvicorn

        uvicorn.run("iccbf_rl.service.app:app", host=args.host, port=args.port)
        return 0
    try:
        resp = send(args.command, build_request(args), args.server)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(resp.model_dump(mode="json"), indent=2))
    failures = getattr(resp, "assertion_failures", [])
    for msg in failures:
        log.warning(msg)
    if args.strict and failures:
        print(f"{len(failures)} episode-level assertion(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
