"""
Plan graph - transferable query-plan DAGs.

Parses plan documents, builds kind-specific feature vectors over fixed
vocabularies, and generates synthetic workloads for desk-scale runs.
"""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import PlanGraphError
from .models import (
    PlanGraph,
    PlanNode,
    PlanNodeKind,
    QueryPlan,
    Workload,
)

PLAN_VERSION = 1

OPERATOR_TYPES = (
    "SeqScan",
    "IndexScan",
    "IndexOnlyScan",
    "BitmapHeapScan",
    "NestedLoop",
    "HashJoin",
    "MergeJoin",
    "Hash",
    "Sort",
    "Aggregate",
    "Limit",
    "Materialize",
)
DATA_TYPES = ("integer", "bigint", "numeric", "text", "date", "boolean")
COMPARISON_OPERATORS = ("=", "<>", "<", "<=", ">", ">=")


def log_scale(x: float) -> float:
    """log10(1 + x); bounded and finite at zero."""
    return math.log10(1.0 + max(x, 0.0))


def _one_hot(vocabulary: tuple[str, ...], value: str) -> list[float]:
    if value not in vocabulary:
        raise PlanGraphError(f"{value!r} not in vocabulary {vocabulary}")
    return [1.0 if v == value else 0.0 for v in vocabulary]


# --- Feature builders ---

def plan_op_features(operator: str, estimated_rows: float, estimated_cost: float) -> tuple[float, ...]:
    return tuple(_one_hot(OPERATOR_TYPES, operator) + [log_scale(estimated_rows), log_scale(estimated_cost)])


def table_features(row_count: float, page_count: float) -> tuple[float, ...]:
    return (log_scale(row_count), log_scale(page_count))


def column_features(
    data_type: str, distinct_fraction: float, null_fraction: float, average_width: float
) -> tuple[float, ...]:
    return tuple(
        _one_hot(DATA_TYPES, data_type) + [distinct_fraction, null_fraction, log_scale(average_width)]
    )


def predicate_features(operator: str, selectivity: float) -> tuple[float, ...]:
    return tuple(_one_hot(COMPARISON_OPERATORS, operator) + [selectivity])


# --- Plan files ---

def plan_from_document(document: dict[str, Any]) -> PlanGraph:
    """Validate a decoded plan document and re-index node ids densely from 0.

    Raises:
        PlanGraphError: unknown kind, feature-length mismatch, cycle, or
            multiple roots.
    """
    try:
        raw_nodes = document["nodes"]
        raw_edges = document.get("edges", [])
        raw_root = document["root"]
    except (KeyError, TypeError) as e:
        raise PlanGraphError(f"plan document missing field: {e}") from e

    index: dict[int, int] = {}
    nodes = []
    for position, raw in enumerate(raw_nodes):
        kind = raw.get("kind")
        if kind not in PlanNodeKind.__members__:
            raise PlanGraphError(f"unknown kind {kind!r} on node {raw.get('id')}")
        original = int(raw["id"])
        if original in index:
            raise PlanGraphError(f"duplicate node id {original}")
        index[original] = position
        nodes.append(
            PlanNode(id=position, kind=PlanNodeKind[kind], features=tuple(float(f) for f in raw["features"]))
        )

    try:
        edges = tuple((index[int(c)], index[int(p)]) for c, p in raw_edges)
        root = index[int(raw_root)]
    except KeyError as e:
        raise PlanGraphError(f"edge or root references unknown node {e}") from e
    return PlanGraph(nodes=tuple(nodes), edges=edges, root=root)


def parse_plan(document: str) -> PlanGraph:
    """Parse plan file content."""
    try:
        payload = json.loads(document)
    except json.JSONDecodeError as e:
        raise PlanGraphError(f"plan is not valid JSON: {e}") from e
    return plan_from_document(payload)


def plan_to_document(plan: PlanGraph) -> dict[str, Any]:
    return {
        "version": PLAN_VERSION,
        "root": plan.root,
        "nodes": [{"id": n.id, "kind": n.kind.value, "features": list(n.features)} for n in plan.nodes],
        "edges": [[c, p] for c, p in plan.edges],
    }


def serialize_plan(plan: PlanGraph) -> str:
    return json.dumps(plan_to_document(plan))


def shape_signature(plan: PlanGraph) -> str:
    """Canonical nested string of node kinds; equal iff the plans share a shape."""
    children = plan.children()

    def walk(node_id: int) -> str:
        kids = sorted(walk(c) for c in children[node_id])
        kind = plan.node(node_id).kind.value
        return f"{kind}({','.join(kids)})" if kids else kind

    return walk(plan.root)


# --- Workload files ---

def _int_pair(values: Any) -> tuple[int, int]:
    lo, hi = values
    return int(lo), int(hi)


def load_workload(path: str | Path) -> Workload:
    """Load ``{version, queries: [{id, plan}]}`` or ``{version, synthetic: {...}}``."""
    payload = json.loads(Path(path).read_text())
    if "synthetic" in payload:
        params = payload["synthetic"]
        return generate_synthetic_workload(
            seed=int(params.get("seed", 0)),
            count=int(params["count"]),
            depth_range=_int_pair(params.get("depth", (2, 4))),
            fanout_range=_int_pair(params.get("fanout", (1, 3))),
        )
    return Workload(
        queries=tuple(
            QueryPlan(query_id=str(q["id"]), plan=plan_from_document(q["plan"])) for q in payload["queries"]
        )
    )


def dump_workload(workload: Workload) -> str:
    payload = {
        "version": PLAN_VERSION,
        "queries": [{"id": q.query_id, "plan": plan_to_document(q.plan)} for q in workload.queries],
    }
    return json.dumps(payload, indent=2)


# --- Synthetic generator ---

class _PlanBuilder:
    """Accumulates nodes and edges for one synthetic plan."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.nodes: list[PlanNode] = []
        self.edges: list[tuple[int, int]] = []

    def add(self, kind: PlanNodeKind, features: tuple[float, ...]) -> int:
        node_id = len(self.nodes)
        self.nodes.append(PlanNode(id=node_id, kind=kind, features=features))
        return node_id

    def leaf(self) -> int:
        rng = self.rng
        kind = (PlanNodeKind.TABLE, PlanNodeKind.COLUMN, PlanNodeKind.PREDICATE)[int(rng.integers(3))]
        if kind is PlanNodeKind.TABLE:
            rows = 10 ** rng.uniform(2, 7)
            return self.add(kind, table_features(rows, rows / rng.uniform(20, 200)))
        if kind is PlanNodeKind.COLUMN:
            return self.add(
                kind,
                column_features(
                    DATA_TYPES[int(rng.integers(len(DATA_TYPES)))],
                    float(rng.uniform(0, 1)),
                    float(rng.uniform(0, 0.3)),
                    float(rng.uniform(1, 64)),
                ),
            )
        return self.add(
            kind,
            predicate_features(
                COMPARISON_OPERATORS[int(rng.integers(len(COMPARISON_OPERATORS)))],
                float(rng.uniform(0, 1)),
            ),
        )

    def operator(self, depth: int, fanout_range: tuple[int, int]) -> int:
        rng = self.rng
        rows = 10 ** rng.uniform(1, 7)
        op = self.add(
            PlanNodeKind.PLAN_OP,
            plan_op_features(
                OPERATOR_TYPES[int(rng.integers(len(OPERATOR_TYPES)))],
                rows,
                rows * rng.uniform(0.5, 20),
            ),
        )
        if depth <= 1:
            children = [self.leaf() for _ in range(int(rng.integers(1, 3)))]
        else:
            lo, hi = fanout_range
            children = [self.operator(depth - 1, fanout_range) for _ in range(int(rng.integers(lo, hi + 1)))]
        self.edges.extend((child, op) for child in children)
        return op


def generate_synthetic_workload(
    seed: int,
    count: int,
    depth_range: tuple[int, int] = (2, 4),
    fanout_range: tuple[int, int] = (1, 3),
) -> Workload:
    """Deterministic synthetic workload of ``count`` valid plans.

    Operator types are drawn uniformly; every bottom operator gets 1-2
    TABLE/COLUMN/PREDICATE leaves.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if depth_range[0] < 1 or depth_range[0] > depth_range[1]:
        raise ValueError(f"bad depth range {depth_range}")
    if fanout_range[0] < 1 or fanout_range[0] > fanout_range[1]:
        raise ValueError(f"bad fanout range {fanout_range}")

    rng = np.random.default_rng(seed)
    queries = []
    for i in range(count):
        builder = _PlanBuilder(rng)
        depth = int(rng.integers(depth_range[0], depth_range[1] + 1))
        root = builder.operator(depth, fanout_range)
        plan = PlanGraph(nodes=tuple(builder.nodes), edges=tuple(builder.edges), root=root)
        queries.append(QueryPlan(query_id=f"q{i + 1:03d}", plan=plan))
    return Workload(queries=tuple(queries))
