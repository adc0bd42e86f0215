"""
Temporal activity definitions for the KnobCF workflow.

These are thin wrappers around the pipeline commands in tuning/pipeline.py.
Each activity takes and returns JSON-serialisable payloads; config files and
run directories are passed as paths.
"""

import asyncio
from pathlib import Path
from collections.abc import Callable, Coroutine
from typing import Any, Optional

from temporalio import activity

from ..config.run_config import RunConfig
from ..tuning.pipeline import cmd_pretrain as _cmd_pretrain
from ..tuning.pipeline import cmd_report as _cmd_report
from ..tuning.pipeline import cmd_tune as _cmd_tune


async def _off_loop(make_coro: Callable[[], Coroutine[Any, Any, Any]]) -> Any:
    """Run a pipeline coroutine on its own event loop in a worker thread.

    Pretraining and tuning are CPU-bound for minutes to hours; the worker's
    loop must stay free to poll and report.
    """
    return await asyncio.to_thread(lambda: asyncio.run(make_coro()))


# --- Phase 1: Pretrain ---

@activity.defn
async def pretrain(config_paths: list[str], out_dir: str, force: bool = False) -> dict:
    """Pretrain embedding and classifier checkpoints on historical tasks.

    Temporal activity wrapping ``cmd_pretrain``.
    """
    configs = [RunConfig.load(p) for p in config_paths]
    return await _off_loop(lambda: _cmd_pretrain(configs, Path(out_dir), force=force))


# --- Phase 2: Tune ---

@activity.defn
async def tune(
    config_path: str,
    out_dir: str,
    checkpoint_dir: Optional[str] = None,
    baseline: bool = False,
    force: bool = False,
) -> dict:
    """Run the KnobCF tuning loop, or the full-evaluation baseline.

    Temporal activity wrapping ``cmd_tune``.
    """
    config = RunConfig.load(config_path)
    report = await _off_loop(
        lambda: _cmd_tune(
            config,
            Path(out_dir),
            checkpoint_dir=Path(checkpoint_dir) if checkpoint_dir else None,
            baseline=baseline,
            force=force,
        )
    )
    return report.model_dump(mode="json")


# --- Phase 3: Report ---

@activity.defn
async def report(log_paths: list[str], out_dir: Optional[str] = None, force: bool = False) -> dict:
    """Summarize evaluation logs.

    Temporal activity wrapping ``cmd_report``.
    """
    return _cmd_report([Path(p) for p in log_paths], Path(out_dir) if out_dir else None, force=force)


# --- Activity Registry ---

ALL_ACTIVITIES = [
    pretrain,
    tune,
    report,
]
