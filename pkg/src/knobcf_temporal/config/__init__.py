"""
Configuration for KnobCF runs and the Temporal workflow.

Provides the run config model, activity configurations, retry policies, and
constants.
"""

from .timeouts import (
    LONG_ACTIVITY_CONFIG,
    SHORT_ACTIVITY_CONFIG,
    MAX_CONCURRENT_ACTIVITIES,
    TASK_QUEUE,
)
from .retry_policies import (
    LONG_ACTIVITY_RETRY,
    NON_RETRYABLE_ERRORS,
    SHORT_ACTIVITY_RETRY,
)
from .run_config import TEMPORAL_ADDRESS, BackendConfig, RunConfig

__all__ = [
    # Activity configs
    "SHORT_ACTIVITY_CONFIG",
    "LONG_ACTIVITY_CONFIG",
    "TASK_QUEUE",
    "MAX_CONCURRENT_ACTIVITIES",
    "TEMPORAL_ADDRESS",
    # Retry policies
    "SHORT_ACTIVITY_RETRY",
    "LONG_ACTIVITY_RETRY",
    "NON_RETRYABLE_ERRORS",
    # Run config
    "RunConfig",
    "BackendConfig",
]
