"""
KnobCF numerics and the tuning loop.

Everything here runs without Temporal.
"""

from .models import (
    CategoryLabel,
    EvaluationRecord,
    GaussianMixture,
    KnobConfiguration,
    KnobSpace,
    KnobSpec,
    PlanGraph,
    SimulatorSpec,
    TuningParams,
    TuningReport,
    Workload,
)
from .base import StageMetadata, stable_seed
from .errors import KnobCFError

__all__ = [
    # Models
    "KnobSpec",
    "KnobSpace",
    "KnobConfiguration",
    "PlanGraph",
    "Workload",
    "GaussianMixture",
    "CategoryLabel",
    "EvaluationRecord",
    "SimulatorSpec",
    "TuningParams",
    "TuningReport",
    # Utilities
    "StageMetadata",
    "stable_seed",
    "KnobCFError",
]
