"""
Knob space - encoding of knob configurations.

Numeric knobs are min-max normalized, categorical knobs are one-hot encoded,
and the segments are concatenated in knob-space order. The union of several
task spaces gives the transferable encoding shared by the classifier.
"""

import json
from collections.abc import Sequence
from functools import lru_cache
from pathlib import Path

import logfire
import numpy as np

from .errors import KnobSpaceError
from .models import KnobConfiguration, KnobKind, KnobSpace, KnobSpec


@lru_cache(maxsize=None)
def _warn_degenerate(name: str) -> None:
    logfire.warn("Knob {knob} has min == max; encoding as 0.0", knob=name)


@lru_cache(maxsize=None)
def _warn_unknown_level(name: str, level: str) -> None:
    logfire.warn("Knob {knob} has unseen level {level}; encoding as all zeros", knob=name, level=level)


def encode_value(spec: KnobSpec, value: float | str) -> np.ndarray:
    """Encode one knob value into its segment."""
    if spec.kind is KnobKind.NUMERIC:
        if isinstance(value, str):
            raise KnobSpaceError(f"knob {spec.name!r} expects a number, got {value!r}")
        x = float(value)
        assert spec.min is not None and spec.max is not None
        if not spec.min <= x <= spec.max:
            raise KnobSpaceError(
                f"knob {spec.name!r} value {x} outside [{spec.min}, {spec.max}]"
            )
        if spec.max == spec.min:
            _warn_degenerate(spec.name)
            return np.zeros(1)
        return np.array([(x - spec.min) / (spec.max - spec.min)])

    segment = np.zeros(len(spec.levels))
    level = str(value)
    if level in spec.levels:
        segment[spec.levels.index(level)] = 1.0
    else:
        # Unknown levels show up when a model is transferred across tasks.
        _warn_unknown_level(spec.name, level)
    return segment


def encode_configuration(space: KnobSpace, config: KnobConfiguration) -> np.ndarray:
    """Encode ``config`` as a fixed-width vector with entries in [0, 1].

    Knobs absent from ``config`` take their default, which is how a sub-task
    configuration is projected into a union space.

    Raises:
        KnobSpaceError: unknown knob name or numeric value out of range.
    """
    known = set(space.names)
    unknown = sorted(set(config.values) - known)
    if unknown:
        raise KnobSpaceError(f"unknown knobs: {unknown}")
    parts = [encode_value(spec, config.values.get(spec.name, spec.default)) for spec in space.knobs]
    return np.concatenate(parts) if parts else np.zeros(0)


def encode_many(space: KnobSpace, configs: Sequence[KnobConfiguration]) -> np.ndarray:
    """Stack encodings into an (m, width) matrix."""
    if not configs:
        return np.zeros((0, space.width))
    return np.vstack([encode_configuration(space, c) for c in configs])


def scalar_value(spec: KnobSpec, value: float | str) -> float:
    """Collapse one knob value to a scalar in [0, 1].

    Numeric knobs use the normalized value; categorical knobs use the level
    rank divided by (levels - 1).
    """
    if spec.kind is KnobKind.NUMERIC:
        return float(encode_value(spec, value)[0])
    level = str(value)
    if level not in spec.levels or len(spec.levels) == 1:
        return 0.0
    return spec.levels.index(level) / (len(spec.levels) - 1)


def union_space(spaces: Sequence[KnobSpace]) -> KnobSpace:
    """Deduplicated union of ``spaces`` in first-seen order.

    Raises:
        KnobSpaceError: the same name maps to different specs.
    """
    merged: dict[str, KnobSpec] = {}
    for space in spaces:
        for spec in space.knobs:
            seen = merged.get(spec.name)
            if seen is None:
                merged[spec.name] = spec
            elif seen != spec:
                raise KnobSpaceError(f"conflicting specs for knob {spec.name!r}")
    return KnobSpace(knobs=tuple(merged.values()))


def complete_configuration(space: KnobSpace, config: KnobConfiguration) -> KnobConfiguration:
    """Fill knobs missing from ``config`` with their defaults."""
    values = {spec.name: config.values.get(spec.name, spec.default) for spec in space.knobs}
    return KnobConfiguration(values=values)


# --- Knob space files ---

def load_knob_space(path: str | Path) -> KnobSpace:
    """Read a ``{version, knobs: [...]}`` document."""
    return KnobSpace.model_validate_json(Path(path).read_text())


def dump_knob_space(space: KnobSpace) -> str:
    payload = {
        "version": space.version,
        "knobs": [spec.model_dump(mode="json") for spec in space.knobs],
    }
    return json.dumps(payload, indent=2)
