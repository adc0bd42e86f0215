"""
Retry policies for KnobCF Temporal activities.

Errors that signal bad input (invalid knobs or plans, incompatible
checkpoints, malformed logs) are non-retryable; only backend failures are
worth another attempt.
"""

from datetime import timedelta

from temporalio.common import RetryPolicy

from ..tuning import errors

# Exception type names, as Temporal reports them in ApplicationError.type
NON_RETRYABLE_ERRORS = [
    cls.__name__
    for cls in (
        errors.KnobSpaceError,
        errors.PlanGraphError,
        errors.InsufficientDataError,
        errors.ShapeMismatchError,
        errors.IncompatibleCheckpointError,
        errors.JudgeError,
        errors.ProvenanceError,
        errors.UnknownQueryError,
        errors.ConfigError,
        errors.LogFormatError,
        errors.ConvergenceError,
    )
] + ["ValidationError"]

# Report building: seconds, quick retry
SHORT_ACTIVITY_RETRY = RetryPolicy(
    initial_interval=timedelta(seconds=2),
    backoff_coefficient=2.0,
    maximum_interval=timedelta(minutes=1),
    maximum_attempts=3,
    non_retryable_error_types=NON_RETRYABLE_ERRORS,
)

# Pretraining and tuning runs: minutes to hours against a real harness
LONG_ACTIVITY_RETRY = RetryPolicy(
    initial_interval=timedelta(seconds=10),
    backoff_coefficient=2.0,
    maximum_interval=timedelta(minutes=5),
    maximum_attempts=3,
    non_retryable_error_types=NON_RETRYABLE_ERRORS,
)
