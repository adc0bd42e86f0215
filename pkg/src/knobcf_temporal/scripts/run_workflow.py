"""
Trigger the KnobCF workflow via Temporal.

This script starts a new workflow or fetches the result of an existing one.
Requires the Temporal worker to be running.

Usage:
    # Pretrain on the historical task, then tune the target task
    uv run python -m knobcf_temporal.scripts.run_workflow \
        --pretrain configs/history.json --tune configs/task.json

    # Resume existing workflow
    uv run python -m knobcf_temporal.scripts.run_workflow -w <workflow-id>
"""

import argparse
import asyncio
from pathlib import Path

from knobcf_temporal.temporal.client import get_result, start_workflow


async def main():
    parser = argparse.ArgumentParser(description="Trigger the KnobCF workflow via Temporal")
    parser.add_argument("--pretrain", nargs="+", default=[], help="RunConfig files of historical tasks")
    parser.add_argument("--tune", help="RunConfig file of the task to tune")
    parser.add_argument("--out", default="runs/workflow", help="Parent directory for run directories")
    parser.add_argument("--force", action="store_true", help="Overwrite existing run directories")
    parser.add_argument("-w", "--workflow-id", help="Resume existing workflow by ID")
    parser.add_argument("--no-wait", action="store_true", help="Start workflow but don't wait for result")

    args = parser.parse_args()

    if args.workflow_id:
        print(f"Getting result for workflow: {args.workflow_id}")
        result = await get_result(args.workflow_id)
    else:
        if not args.pretrain or not args.tune:
            parser.error("--pretrain and --tune are required when starting a workflow")
        # The worker may run in another directory
        workflow_id = await start_workflow(
            pretrain_configs=[str(Path(p).resolve()) for p in args.pretrain],
            tune_config=str(Path(args.tune).resolve()),
            output_dir=str(Path(args.out).resolve()),
            force=args.force,
        )

        if args.no_wait:
            print("Workflow started. Check status at:")
            print(f"  http://localhost:8233/namespaces/default/workflows/{workflow_id}")
            return

        print("Waiting for workflow to complete...")
        result = await get_result(workflow_id)

    print("\n" + "=" * 60)
    print("WORKFLOW RESULT")
    print("=" * 60)
    print(result)


if __name__ == "__main__":
    asyncio.run(main())
