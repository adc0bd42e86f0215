"""
Temporal client for triggering KnobCF workflows.

Provides functions to start new workflows or get results from existing ones.
"""

import json
import uuid
from dataclasses import asdict
from typing import Optional

from temporalio.client import Client

from ..config import TASK_QUEUE, TEMPORAL_ADDRESS
from .workflows import KnobTuningInput, KnobTuningWorkflow


async def start_workflow(
    pretrain_configs: list[str],
    tune_config: str,
    output_dir: str = "runs",
    force: bool = False,
    workflow_id: Optional[str] = None,
) -> str:
    """Start a new KnobCF workflow.

    Args:
        pretrain_configs: Run config files of the historical tasks.
        tune_config: Run config file of the task to tune.
        output_dir: Parent directory of the pretrain/knobcf/baseline/report run directories.
        force: Overwrite existing run directories.
        workflow_id: Optional workflow ID. Generated if not provided.

    Returns:
        The workflow ID.
    """
    client = await Client.connect(TEMPORAL_ADDRESS)

    if workflow_id is None:
        workflow_id = f"knobcf-{uuid.uuid4().hex[:8]}"

    input_data = KnobTuningInput(
        pretrain_configs=pretrain_configs,
        tune_config=tune_config,
        output_dir=output_dir,
        force=force,
    )

    await client.start_workflow(
        KnobTuningWorkflow.run,
        json.dumps(asdict(input_data)),
        id=workflow_id,
        task_queue=TASK_QUEUE,
    )

    print(f"Started workflow: {workflow_id}")
    print(f"Temporal UI: http://localhost:8233/namespaces/default/workflows/{workflow_id}")

    return workflow_id


async def get_result(workflow_id: str) -> str:
    """Get the result of an existing workflow.

    Args:
        workflow_id: The workflow ID to query.

    Returns:
        The workflow result as JSON.
    """
    client = await Client.connect(TEMPORAL_ADDRESS)

    handle = client.get_workflow_handle(workflow_id)
    return await handle.result()
