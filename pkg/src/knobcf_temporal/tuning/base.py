"""
Base utilities for KnobCF stages.

Provides span metadata, stable seeding and canonical hashing shared by all
tuning modules.
"""

import hashlib
import json
from dataclasses import dataclass
from typing import Any


# --- Stage Metadata ---

@dataclass
class StageMetadata:
    """Structured metadata for stage spans in Logfire.

    See docs/metadata-spec.md for valid values.
    """
    phase: str      # pretrain, finetune, tune, report
    action: str     # importance, embedding, labeling, classifier, initialize, iterate, ...
    component: str  # knob-space, plan-graph, query-embedding, gmm-labeler, ...
    task_id: str = "default"

    def to_dict(self, task_id: str | None = None) -> dict:
        """Convert to span attributes.

        Args:
            task_id: Override the default task_id if provided.

        Returns:
            Dictionary suitable for ``logfire.span(..., **attributes)``.
        """
        return {
            "phase": self.phase,
            "action": self.action,
            "component": self.component,
            "task_id": task_id or self.task_id,
        }


# --- Seeding ---

def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and no whitespace so hashes are stable."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def short_hash(payload: Any, length: int = 16) -> str:
    """Hex digest prefix of the canonical JSON form of ``payload``."""
    digest = hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
    return digest[:length]


def stable_seed(*parts: Any) -> int:
    """Derive a 64-bit seed from arbitrary JSON-able parts.

    Python's ``hash`` is salted per process; this is not.
    """
    digest = hashlib.sha256(canonical_json(list(parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
