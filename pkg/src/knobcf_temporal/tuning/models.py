"""
Shared Pydantic models for KnobCF.

These models define the structured values passed between knob encoding,
plan embedding, labeling, classification and the tuning loop.
"""

import math
from collections import deque
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .base import short_hash
from .errors import KnobSpaceError, PlanGraphError


# --- Knob Space ---

class KnobKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class KnobSpec(BaseModel):
    """One tunable knob."""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: KnobKind
    min: Optional[float] = None
    max: Optional[float] = None
    levels: tuple[str, ...] = ()
    default: float | str
    integer: bool = False

    @model_validator(mode="after")
    def _check_kind(self) -> "KnobSpec":
        if self.kind is KnobKind.NUMERIC:
            if self.min is None or self.max is None:
                raise KnobSpaceError(f"numeric knob {self.name!r} needs min and max")
            if self.min > self.max:
                raise KnobSpaceError(f"knob {self.name!r}: min {self.min} > max {self.max}")
            if isinstance(self.default, str):
                raise KnobSpaceError(f"numeric knob {self.name!r} has non-numeric default")
            if not self.min <= float(self.default) <= self.max:
                raise KnobSpaceError(
                    f"knob {self.name!r}: default {self.default} outside [{self.min}, {self.max}]"
                )
        else:
            if not self.levels:
                raise KnobSpaceError(f"categorical knob {self.name!r} has no levels")
            if len(set(self.levels)) != len(self.levels):
                raise KnobSpaceError(f"categorical knob {self.name!r} has duplicate levels")
            if str(self.default) not in self.levels:
                raise KnobSpaceError(f"knob {self.name!r}: default {self.default!r} not a level")
        return self

    @property
    def width(self) -> int:
        """Number of encoding entries this knob occupies."""
        return 1 if self.kind is KnobKind.NUMERIC else len(self.levels)


class KnobSpace(BaseModel):
    """Ordered knob space K = {K_1, ..., K_n}."""
    model_config = ConfigDict(frozen=True)

    version: int = 1
    knobs: tuple[KnobSpec, ...]

    @field_validator("knobs")
    @classmethod
    def _unique_names(cls, knobs: tuple[KnobSpec, ...]) -> tuple[KnobSpec, ...]:
        names = [k.name for k in knobs]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise KnobSpaceError(f"duplicate knob names: {dupes}")
        return knobs

    @property
    def names(self) -> list[str]:
        return [k.name for k in self.knobs]

    @property
    def width(self) -> int:
        return sum(k.width for k in self.knobs)

    def get(self, name: str) -> KnobSpec:
        for knob in self.knobs:
            if knob.name == name:
                return knob
        raise KnobSpaceError(f"unknown knob {name!r}")

    def segments(self) -> list[tuple[KnobSpec, slice]]:
        """Encoding slice of every knob, in space order."""
        out = []
        offset = 0
        for knob in self.knobs:
            out.append((knob, slice(offset, offset + knob.width)))
            offset += knob.width
        return out

    def default_configuration(self) -> "KnobConfiguration":
        return KnobConfiguration(values={k.name: k.default for k in self.knobs})


class KnobConfiguration(BaseModel):
    """One point k in the knob space."""
    model_config = ConfigDict(frozen=True)

    values: dict[str, float | str]

    @property
    def config_id(self) -> str:
        return short_hash(self.values, length=12)


# --- Plan Graph ---

class PlanNodeKind(str, Enum):
    PLAN_OP = "PLAN_OP"
    TABLE = "TABLE"
    COLUMN = "COLUMN"
    PREDICATE = "PREDICATE"


# Feature lengths per kind: 12-way operator one-hot + rows + cost; rows + pages;
# 6-way data-type one-hot + distinct fraction + null fraction + width;
# 6-way comparison one-hot + selectivity.
FEATURE_LENGTHS: dict[PlanNodeKind, int] = {
    PlanNodeKind.PLAN_OP: 14,
    PlanNodeKind.TABLE: 2,
    PlanNodeKind.COLUMN: 9,
    PlanNodeKind.PREDICATE: 7,
}

# Indices of entries that must lie in [0, 1].
FRACTION_INDICES: dict[PlanNodeKind, tuple[int, ...]] = {
    PlanNodeKind.PLAN_OP: (),
    PlanNodeKind.TABLE: (),
    PlanNodeKind.COLUMN: (6, 7),
    PlanNodeKind.PREDICATE: (6,),
}


class PlanNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int
    kind: PlanNodeKind
    features: tuple[float, ...]

    @model_validator(mode="after")
    def _check_features(self) -> "PlanNode":
        expected = FEATURE_LENGTHS[self.kind]
        if len(self.features) != expected:
            raise PlanGraphError(
                f"feature-length mismatch on node {self.id}: "
                f"{self.kind.value} expects {expected}, got {len(self.features)}"
            )
        if not all(math.isfinite(f) for f in self.features):
            raise PlanGraphError(f"non-finite feature on node {self.id}")
        for i in FRACTION_INDICES[self.kind]:
            if not 0.0 <= self.features[i] <= 1.0:
                raise PlanGraphError(f"fraction out of [0,1] on node {self.id} at index {i}")
        return self


class PlanGraph(BaseModel):
    """Transferable query-plan DAG; edges point child -> parent."""
    model_config = ConfigDict(frozen=True)

    nodes: tuple[PlanNode, ...]
    edges: tuple[tuple[int, int], ...] = ()
    root: int

    @model_validator(mode="after")
    def _check_dag(self) -> "PlanGraph":
        ids = [n.id for n in self.nodes]
        if not ids:
            raise PlanGraphError("plan has no nodes")
        if len(set(ids)) != len(ids):
            raise PlanGraphError("duplicate node ids")
        known = set(ids)
        for child, parent in self.edges:
            if child not in known or parent not in known:
                raise PlanGraphError(f"edge ({child}, {parent}) references an unknown node")
            if child == parent:
                raise PlanGraphError(f"cycle detected at node {child}")
        sinks = known - {child for child, _ in self.edges}
        if len(sinks) != 1:
            raise PlanGraphError(f"multiple roots: {sorted(sinks)}" if sinks else "cycle detected: no root")
        (sink,) = sinks
        if sink != self.root:
            raise PlanGraphError(f"declared root {self.root} is not the graph sink {sink}")
        if self.node(self.root).kind is not PlanNodeKind.PLAN_OP:
            raise PlanGraphError("root kind must be PLAN_OP")
        if len(self.topological_order()) != len(ids):
            raise PlanGraphError("cycle detected")
        return self

    def node(self, node_id: int) -> PlanNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise PlanGraphError(f"no node {node_id}")

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for child, parent in self.edges:
            out[parent].append(child)
        return out

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, leaves first. Shorter than len(nodes) iff cyclic."""
        pending = {n.id: 0 for n in self.nodes}
        parents: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for child, parent in self.edges:
            pending[parent] += 1
            parents[child].append(parent)
        ready = deque(nid for nid in sorted(pending) if pending[nid] == 0)
        order = []
        while ready:
            nid = ready.popleft()
            order.append(nid)
            for parent in parents[nid]:
                pending[parent] -= 1
                if pending[parent] == 0:
                    ready.append(parent)
        return order


class QueryPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    query_id: str
    plan: PlanGraph


class Workload(BaseModel):
    """The workload W (a set of queries)."""
    model_config = ConfigDict(frozen=True)

    queries: tuple[QueryPlan, ...]

    @field_validator("queries")
    @classmethod
    def _unique_ids(cls, queries: tuple[QueryPlan, ...]) -> tuple[QueryPlan, ...]:
        ids = [q.query_id for q in queries]
        if len(set(ids)) != len(ids):
            raise PlanGraphError("duplicate query ids in workload")
        return queries

    @property
    def query_ids(self) -> list[str]:
        return [q.query_id for q in self.queries]

    def plan(self, query_id: str) -> PlanGraph:
        for q in self.queries:
            if q.query_id == query_id:
                return q.plan
        raise KeyError(query_id)


# --- Labels ---

class MixtureComponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    weight: float
    mean: float
    variance: float


class GaussianMixture(BaseModel):
    """Per-query joint latency distribution, components sorted by mean."""
    model_config = ConfigDict(frozen=True)

    components: tuple[MixtureComponent, ...]
    log_likelihood: float = 0.0
    bic: float = 0.0
    trace: tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "GaussianMixture":
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {total}")
        means = [c.mean for c in self.components]
        if means != sorted(means):
            raise ValueError("components must be sorted by mean")
        return self

    @property
    def k(self) -> int:
        return len(self.components)


class CategoryLabel(BaseModel):
    """n-bit mixture-membership label."""
    model_config = ConfigDict(frozen=True)

    bits: tuple[int, ...]

    @field_validator("bits")
    @classmethod
    def _binary(cls, bits: tuple[int, ...]) -> tuple[int, ...]:
        if any(b not in (0, 1) for b in bits):
            raise ValueError("label bits must be 0 or 1")
        return bits

    @classmethod
    def parse(cls, text: str) -> "CategoryLabel":
        return cls(bits=tuple(int(c) for c in text))

    @classmethod
    def one_hot(cls, index: int, width: int) -> "CategoryLabel":
        return cls(bits=tuple(1 if i == index else 0 for i in range(width)))

    @property
    def width(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


# --- Importance ---

class ImportanceVector(BaseModel):
    scores: dict[str, float]
    normalized: bool = False

    def as_list(self, knob_names: list[str]) -> list[float]:
        """Scores in ``knob_names`` order; absent knobs score 0."""
        return [self.scores.get(name, 0.0) for name in knob_names]


# --- Evaluation ---

class EvaluationResult(BaseModel):
    latency: float = Field(gt=0)
    regime: Optional[int] = None
    wall_clock: float = 0.0

    @field_validator("latency")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("latency must be finite")
        return value


class EvaluationRecord(BaseModel):
    """One (config, query, latency, label) observation."""
    model_config = ConfigDict(frozen=True)

    query_id: str
    config_id: str
    latency: float
    label: CategoryLabel


class SensitiveKnob(BaseModel):
    knob: str
    weight: float


class Regime(BaseModel):
    mu: float = Field(gt=0)
    sigma: float = Field(gt=0)


class SimulatedQuery(BaseModel):
    id: str
    base: float = Field(gt=0)
    sensitive: list[SensitiveKnob]
    regimes: list[Regime] = Field(min_length=1)
    thresholds: list[float] = []

    @model_validator(mode="after")
    def _check(self) -> "SimulatedQuery":
        if len(self.thresholds) != len(self.regimes) - 1:
            raise ValueError(f"query {self.id}: need {len(self.regimes) - 1} thresholds")
        if self.thresholds != sorted(self.thresholds):
            raise ValueError(f"query {self.id}: thresholds must ascend")
        mus = [r.mu for r in self.regimes]
        if len(set(mus)) != len(mus):
            raise ValueError(f"query {self.id}: regime multipliers must be distinct")
        if len(self.regimes) > 1 and not self.sensitive:
            raise ValueError(f"query {self.id}: multiple regimes need sensitive knobs")
        return self


class SimulatorSpec(BaseModel):
    version: int = 1
    seed: int = 0
    queries: list[SimulatedQuery]

    @property
    def max_regimes(self) -> int:
        return max(len(q.regimes) for q in self.queries)


# --- Tuning ---

class TuningParams(BaseModel):
    """Tuning-loop parameters."""
    iterations: int = Field(default=100, ge=0)
    init_count: int = Field(default=20, ge=1)
    seed: int = 0
    n: int = Field(default=16, ge=1, le=64)
    m_min: int = Field(default=2, ge=1)
    finetune_iterations: int = Field(default=30, ge=0)
    candidate_count: int = Field(default=1000, ge=1)
    p90_repeats: int = Field(default=10, ge=2)
    task_id: str = "task"


class TuningRow(BaseModel):
    """One evaluated or estimated configuration."""
    iteration: int
    phase: Literal["init", "tune"]
    config: KnobConfiguration
    config_id: str
    total: float
    breakdown: dict[str, float]
    skipped: int = 0
    executed_seconds: float = 0.0


class LogEvent(BaseModel):
    """One per-query row of the evaluation log."""
    iteration: int
    phase: Literal["init", "tune"]
    config_id: str
    query_id: str
    mode: Literal["executed", "estimated"]
    latency: float
    label: str = ""
    regime: Optional[int] = None


class SeriesPoint(BaseModel):
    cumulative_seconds: float
    best_total: float
    throughput: float


class InferenceThroughput(BaseModel):
    """Queries per second for embedding and category inference."""
    embedding_qps: float
    category_qps: float


class TuningReport(BaseModel):
    task_id: str
    config_hash: str = ""
    mode: Literal["knobcf", "full-eval"] = "knobcf"
    best_config: KnobConfiguration
    best_config_id: str
    best_total: float
    iteration_times: list[float]
    average_iteration_time: float
    init_executed: int
    executed_queries: int
    estimated_queries: int
    throughput_series: list[SeriesPoint]
    best_throughput: float
    p90_latency: Optional[float] = None
    inference: Optional[InferenceThroughput] = None


# --- Training ---

class LossTrace(BaseModel):
    """Per-epoch mean training loss."""
    losses: list[float]
    stopped_early: bool = False

    @property
    def smoothed(self) -> list[float]:
        """Running minimum; monotone non-increasing."""
        out: list[float] = []
        best = math.inf
        for loss in self.losses:
            best = min(best, loss)
            out.append(best)
        return out

    @property
    def final(self) -> float:
        return self.losses[-1] if self.losses else math.nan
