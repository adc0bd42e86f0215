"""
Start the Temporal worker for the KnobCF workflow.

This script starts the worker that polls the task queue and executes
workflows and activities.

Usage:
    uv run python -m knobcf_temporal.scripts.run_worker
"""

# Configure Logfire before the pipeline modules are imported
import logfire

logfire.configure(send_to_logfire="if-token-present", service_name="knobcf")

import asyncio

from knobcf_temporal.temporal.worker import main


if __name__ == "__main__":
    asyncio.run(main())
