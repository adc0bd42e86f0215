"""
KnobCF command line.

Runs the pipeline standalone, without Temporal.

Usage:
    knobcf --out runs/pretrain pretrain configs/history.json
    knobcf finetune configs/task.json --checkpoints runs/pretrain
    knobcf --out runs/knobcf tune configs/task.json --checkpoints runs/pretrain
    knobcf --out runs/full tune configs/task.json --baseline full-eval
    knobcf report runs/knobcf/evaluation_log.csv runs/full/evaluation_log.csv
    knobcf --out data/sim.json simulate-spec --knob-space data/knobs.json --workload data/workload.json
    knobcf --out runs/sweep sweep configs/task.json

Exit codes: 0 success, 1 run failure, 2 usage or configuration error.
"""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import logfire
from pydantic import ValidationError

from knobcf_temporal.config.run_config import RunConfig
from knobcf_temporal.tuning.errors import ConfigError, KnobCFError
from knobcf_temporal.tuning.pipeline import (
    SWEEP_DIMENSIONS,
    cmd_finetune,
    cmd_pretrain,
    cmd_report,
    cmd_simulate_spec,
    cmd_sweep,
    cmd_tune,
    format_report,
)

# CLI flag -> RunConfig field
OVERRIDES = {
    "tuner": "tuner",
    "n": "n",
    "init_count": "init_count",
    "iters": "iterations",
    "m_min": "m_min",
    "tau": "tau",
    "finetune_iters": "finetune_iterations",
    "candidates": "candidate_count",
    "p90_repeats": "p90_repeats",
    "evaluations": "pretrain_evaluations",
    "task_id": "task_id",
}


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="RunConfig JSON file")
    parser.add_argument("--tuner", choices=["bo", "random"])
    parser.add_argument("--n", type=int, help="Classifier output dimension")
    parser.add_argument("--init-count", type=int, help="LHS initialization size")
    parser.add_argument("--iters", type=int, help="Tuning iterations N")
    parser.add_argument("--m-min", type=int, help="Minimum label history before estimating")
    parser.add_argument("--tau", type=float, help="Labeling probability threshold")
    parser.add_argument("--finetune-iters", type=int, help="Warm-up iterations F before fine-tuning")
    parser.add_argument("--candidates", type=int, help="BO candidate pool size")
    parser.add_argument("--p90-repeats", type=int, help="Repeats for the p90 latency measurement")
    parser.add_argument("--evaluations", type=int, help="Pretraining evaluations per task")
    parser.add_argument("--task-id")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knobcf", description="Knob tuning with a query-level knob classifier")
    parser.add_argument("--seed", type=int, help="Override every seed in the run config")
    parser.add_argument("--out", type=Path, help="Run directory (or output file for simulate-spec)")
    parser.add_argument("--force", action="store_true", help="Overwrite an existing run directory")
    sub = parser.add_subparsers(dest="command", required=True)

    pretrain = sub.add_parser("pretrain", help="Train embedding and classifier checkpoints on historical tasks")
    pretrain.add_argument("configs", nargs="*", help="RunConfig files, one per historical task")
    pretrain.add_argument("--n", type=int, help="Classifier output dimension")
    pretrain.add_argument("--evaluations", type=int, help="Pretraining evaluations per task")

    finetune = sub.add_parser("finetune", help="Few-shot adapt pretrained checkpoints to one task")
    _add_run_flags(finetune)
    finetune.add_argument("--checkpoints", type=Path, required=True)

    tune = sub.add_parser("tune", help="Run the tuning loop")
    _add_run_flags(tune)
    tune.add_argument("--checkpoints", type=Path)
    tune.add_argument("--baseline", choices=["full-eval"], help="Execute every query; no classifier")
    tune.add_argument("--no-p90", action="store_true", help="Skip the repeated p90 measurement")

    report = sub.add_parser("report", help="Summarize one or two evaluation logs")
    report.add_argument("logs", nargs="*", type=Path)
    report.add_argument("--tau", type=float, default=0.2)

    simulate = sub.add_parser("simulate-spec", help="Generate a simulator spec")
    simulate.add_argument("--knob-space", type=Path, required=True)
    simulate.add_argument("--workload", type=Path, help="Workload whose query ids to cover")
    simulate.add_argument("--queries", type=int, default=10, help="Query count when no workload is given")
    simulate.add_argument("--regimes", type=_int_list, default=[2, 3], help="Regime count range, e.g. 2,3")
    simulate.add_argument("--sensitive", type=int, default=2, help="Sensitive knobs per query")

    sweep = sub.add_parser("sweep", help="Pretrain and tune across output dimensions")
    _add_run_flags(sweep)
    sweep.add_argument("--dims", type=_int_list, default=list(SWEEP_DIMENSIONS))

    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Apply CLI flags on top of ``config`` and revalidate the field bounds."""
    updates: dict[str, Any] = {}
    for flag, name in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            updates[name] = value
    if args.seed is not None:
        updates["seed"] = args.seed
    if not updates:
        return config
    return RunConfig.model_validate({**config.model_dump(), **updates})


def load_config(path: str, args: argparse.Namespace) -> RunConfig:
    return apply_overrides(RunConfig.load(path), args)


def _out(args: argparse.Namespace, config: Optional[RunConfig], name: str) -> Path:
    if args.out is not None:
        return args.out
    base = config.output_dir if config is not None else Path("runs")
    return base / name


async def dispatch(args: argparse.Namespace) -> dict:
    if args.command == "pretrain":
        if not args.configs:
            raise ConfigError("pretrain needs at least one task config")
        configs = [load_config(p, args) for p in args.configs]
        return await cmd_pretrain(configs, _out(args, configs[0], "pretrain"), seed=args.seed, force=args.force)

    if args.command == "finetune":
        config = load_config(args.config, args)
        return await cmd_finetune(config, args.checkpoints, _out(args, config, "finetune"), force=args.force)

    if args.command == "tune":
        config = load_config(args.config, args)
        baseline = args.baseline == "full-eval"
        report = await cmd_tune(
            config,
            _out(args, config, "full-eval" if baseline else "knobcf"),
            checkpoint_dir=args.checkpoints,
            baseline=baseline,
            force=args.force,
            measure_p90=not args.no_p90,
        )
        return report.model_dump(mode="json")

    if args.command == "report":
        result = cmd_report(args.logs, args.out, force=args.force, seed=args.seed or 0, tau=args.tau)
        print(format_report(result))
        return result

    if args.command == "simulate-spec":
        if len(args.regimes) != 2:
            raise ConfigError(f"--regimes needs exactly two integers, got {args.regimes}")
        path = cmd_simulate_spec(
            args.knob_space,
            args.out or Path("simulator.json"),
            workload=args.workload,
            query_count=args.queries,
            seed=args.seed or 0,
            regimes=(args.regimes[0], args.regimes[1]),
            sensitive_per_query=args.sensitive,
            force=args.force,
        )
        return {"simulator_spec": str(path)}

    if args.command == "sweep":
        config = load_config(args.config, args)
        return await cmd_sweep(config, _out(args, config, "sweep"), dimensions=args.dims, force=args.force)

    raise ConfigError(f"unknown command {args.command}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one command and return the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        result = asyncio.run(dispatch(args))
    except (ConfigError, ValidationError) as e:
        print(f"error [INVALID_CONFIG]: {e}", file=sys.stderr)
        return 2
    except KnobCFError as e:
        print(f"error [{e.code}]: {e}", file=sys.stderr)
        return 1
    if args.command not in ("report", "simulate-spec"):
        print(f"{args.command} complete: {_headline(result)}")
    return 0


def _headline(result: dict) -> str:
    keys = ("config_hash", "rows", "best_total", "executed_queries", "estimated_queries", "adapted")
    return ", ".join(f"{k}={result[k]}" for k in keys if k in result)


def run() -> None:
    """Console-script entry point."""
    logfire.configure(send_to_logfire="if-token-present", service_name="knobcf", console=False)
    sys.exit(main())


if __name__ == "__main__":
    run()
