"""
Temporal integration for the KnobCF workflow.

Provides thin activity wrappers, workflow definition, and worker configuration.

IMPORTANT: Do not add imports here - they trigger Temporal sandbox restrictions.
Import directly from the specific module you need:

    from knobcf_temporal.temporal.activities import ALL_ACTIVITIES
    from knobcf_temporal.temporal.workflows import KnobTuningWorkflow
"""

__all__: list[str] = []  # Explicit empty exports to encourage direct imports
