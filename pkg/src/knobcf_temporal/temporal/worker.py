"""
Temporal worker for the KnobCF workflow.

Registers workflows and activities, then polls the task queue for work.

Pretrain and tune activities run their numeric work in a thread, so at most
MAX_CONCURRENT_ACTIVITIES of them share the host at once.

NOTE: Workflow sandboxing is disabled because numpy and scipy are imported
through the config package. The workflow itself only orchestrates activity
calls; all numeric work and backend evaluations happen in activities.
"""

import asyncio

import logfire
from temporalio.client import Client
from temporalio.worker import UnsandboxedWorkflowRunner, Worker

from ..config import MAX_CONCURRENT_ACTIVITIES, TASK_QUEUE, TEMPORAL_ADDRESS
from .activities import ALL_ACTIVITIES
from .workflows import KnobTuningWorkflow


async def main():
    """Start the Temporal worker."""
    logfire.info("Connecting to Temporal at {address}", address=TEMPORAL_ADDRESS)
    client = await Client.connect(TEMPORAL_ADDRESS)

    logfire.info(
        "Starting worker on {task_queue} with {activities} activities",
        task_queue=TASK_QUEUE,
        activities=len(ALL_ACTIVITIES),
    )

    worker = Worker(
        client,
        task_queue=TASK_QUEUE,
        workflows=[KnobTuningWorkflow],
        activities=ALL_ACTIVITIES,
        max_concurrent_activities=MAX_CONCURRENT_ACTIVITIES,
        workflow_runner=UnsandboxedWorkflowRunner(),
    )

    print("Worker running (sandbox disabled). Press Ctrl+C to stop.")
    await worker.run()


if __name__ == "__main__":
    asyncio.run(main())
