"""
Activity timeout configuration for the KnobCF Temporal workflow.

These configs are passed to workflow.execute_activity() calls.
"""

from datetime import timedelta

from .retry_policies import (
    LONG_ACTIVITY_RETRY,
    SHORT_ACTIVITY_RETRY,
)


# Report activity
# 5 min execution timeout, 15 min total including retries
SHORT_ACTIVITY_CONFIG = {
    "start_to_close_timeout": timedelta(minutes=5),
    "schedule_to_close_timeout": timedelta(minutes=15),
    "retry_policy": SHORT_ACTIVITY_RETRY,
}

# Pretrain and tune activities
# 2 h execution timeout, 6 h total including retries
# Note: heartbeats are not sent; the numeric work runs in one call
LONG_ACTIVITY_CONFIG = {
    "start_to_close_timeout": timedelta(hours=2),
    "schedule_to_close_timeout": timedelta(hours=6),
    "retry_policy": LONG_ACTIVITY_RETRY,
}

# One KnobCF run and one baseline run side by side; numeric work is CPU-bound
MAX_CONCURRENT_ACTIVITIES = 2

# Task queue name
TASK_QUEUE = "knobcf-task-queue"
