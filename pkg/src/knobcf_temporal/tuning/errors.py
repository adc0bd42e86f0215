"""
Exception hierarchy for KnobCF.

Every error carries a stable ``code`` so that Temporal retry policies and the
CLI can classify failures without string matching on messages.
"""


class KnobCFError(Exception):
    """Base class for all KnobCF failures."""

    code = "KNOBCF_ERROR"


class KnobSpaceError(KnobCFError):
    """Invalid knob specification, unknown knob, or out-of-range value."""

    code = "INVALID_KNOB"


class PlanGraphError(KnobCFError):
    """Plan document violates the plan-graph schema or DAG invariants."""

    code = "INVALID_PLAN"


class InsufficientDataError(KnobCFError):
    """Too few samples to fit a model."""

    code = "INSUFFICIENT_SAMPLES"


class ShapeMismatchError(KnobCFError):
    """Array widths or label widths disagree."""

    code = "SHAPE_MISMATCH"


class IncompatibleCheckpointError(KnobCFError):
    """Checkpoints disagree on d, encoding width, or n."""

    code = "INCOMPATIBLE_CHECKPOINT"


class JudgeError(KnobCFError):
    """estimate() called for a label without enough history."""

    code = "NO_HISTORY"


class ProvenanceError(KnobCFError):
    """A label store from another task was handed to judge/estimate."""

    code = "FOREIGN_TASK"


class UnknownQueryError(KnobCFError):
    """The backend has no query with this id."""

    code = "UNKNOWN_QUERY"


class BackendError(KnobCFError):
    """The evaluation backend failed (nonzero exit, unparseable output)."""

    code = "BACKEND_FAILURE"


class ConfigError(KnobCFError):
    """Run configuration or command-line usage error."""

    code = "INVALID_CONFIG"


class LogFormatError(KnobCFError):
    """Malformed evaluation log row."""

    code = "MALFORMED_LOG"


class ConvergenceError(KnobCFError):
    """EM log-likelihood decreased between iterations."""

    code = "EM_NOT_MONOTONE"
