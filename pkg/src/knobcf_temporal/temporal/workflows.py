"""
KnobCF Temporal Workflow definition.

Orchestrates pretrain -> (KnobCF tuning || full-evaluation baseline) -> report
with durable execution.
"""

import asyncio
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from temporalio import workflow

# Pass through non-deterministic imports (pydantic, numpy, etc.)
with workflow.unsafe.imports_passed_through():
    from ..config import LONG_ACTIVITY_CONFIG, SHORT_ACTIVITY_CONFIG


@dataclass
class KnobTuningInput:
    """Input for the KnobCF workflow."""
    pretrain_configs: list[str] = field(default_factory=list)
    tune_config: str = ""
    output_dir: str = "runs"
    force: bool = False


@dataclass
class KnobTuningResult:
    """Complete result of the KnobCF workflow."""
    pretrain: Optional[dict] = None
    knobcf: Optional[dict] = None
    baseline: Optional[dict] = None
    summary: Optional[dict] = None
    errors: list = field(default_factory=list)


@workflow.defn
class KnobTuningWorkflow:
    """KnobCF workflow with durable execution via Temporal.

    1. Pretrain - embedding and classifier checkpoints from historical tasks
    2. Tune - KnobCF run and full-evaluation baseline in parallel
    3. Report - comparative summary of the two evaluation logs
    """

    @workflow.run
    async def run(self, input_json: str) -> str:
        """Execute the KnobCF pipeline."""
        input_data = KnobTuningInput(**json.loads(input_json))
        result = KnobTuningResult()
        out = input_data.output_dir.rstrip("/")
        pretrain_dir = f"{out}/pretrain"
        knobcf_dir = f"{out}/knobcf"
        baseline_dir = f"{out}/baseline"

        # Phase 1: Pretrain
        workflow.logger.info(f"Phase 1: Pretraining on {len(input_data.pretrain_configs)} tasks")

        try:
            result.pretrain = await workflow.execute_activity(
                "pretrain",
                args=[input_data.pretrain_configs, pretrain_dir, input_data.force],
                **LONG_ACTIVITY_CONFIG,
            )
        except Exception as e:
            workflow.logger.warning(f"Pretraining failed: {e}")
            result.errors.append(f"pretrain: {e}")
            return json.dumps(asdict(result), indent=2)

        # Phase 2: Tune - KnobCF and baseline in parallel
        workflow.logger.info("Phase 2: Tuning with KnobCF and the full-evaluation baseline")

        knobcf_task = workflow.execute_activity(
            "tune",
            args=[input_data.tune_config, knobcf_dir, pretrain_dir, False, input_data.force],
            **LONG_ACTIVITY_CONFIG,
        )
        baseline_task = workflow.execute_activity(
            "tune",
            args=[input_data.tune_config, baseline_dir, None, True, input_data.force],
            **LONG_ACTIVITY_CONFIG,
        )
        tune_results = await asyncio.gather(knobcf_task, baseline_task, return_exceptions=True)

        if isinstance(tune_results[0], BaseException):
            workflow.logger.warning(f"KnobCF tuning failed: {tune_results[0]}")
            result.errors.append(f"knobcf: {tune_results[0]}")
        else:
            result.knobcf = tune_results[0]
        if isinstance(tune_results[1], BaseException):
            workflow.logger.warning(f"Baseline tuning failed: {tune_results[1]}")
            result.errors.append(f"baseline: {tune_results[1]}")
        else:
            result.baseline = tune_results[1]

        # Phase 3: Report
        logs = []
        if result.knobcf is not None:
            logs.append(f"{knobcf_dir}/evaluation_log.csv")
        if result.baseline is not None:
            logs.append(f"{baseline_dir}/evaluation_log.csv")

        if logs:
            workflow.logger.info(f"Phase 3: Reporting on {len(logs)} logs")
            try:
                result.summary = await workflow.execute_activity(
                    "report",
                    args=[logs, f"{out}/report", input_data.force],
                    **SHORT_ACTIVITY_CONFIG,
                )
            except Exception as e:
                workflow.logger.warning(f"Report failed: {e}")
                result.errors.append(f"report: {e}")

        workflow.logger.info("Workflow complete")
        return json.dumps(asdict(result), indent=2)
