import json

import pytest

from knobcf_temporal.tuning.errors import PlanGraphError
from knobcf_temporal.tuning.models import PlanNodeKind
from knobcf_temporal.tuning.plans import (
    column_features,
    dump_workload,
    generate_synthetic_workload,
    load_workload,
    parse_plan,
    plan_from_document,
    plan_op_features,
    predicate_features,
    serialize_plan,
    shape_signature,
    table_features,
)


def _document(ids=(10, 20, 30, 40)):
    join, scan, table, predicate = ids
    return {
        "root": join,
        "nodes": [
            {"id": join, "kind": "PLAN_OP", "features": list(plan_op_features("HashJoin", 500, 120))},
            {"id": scan, "kind": "PLAN_OP", "features": list(plan_op_features("SeqScan", 1000, 40))},
            {"id": table, "kind": "TABLE", "features": list(table_features(1e6, 1e4))},
            {"id": predicate, "kind": "PREDICATE", "features": list(predicate_features("<", 0.1))},
        ],
        "edges": [[scan, join], [table, scan], [predicate, scan]],
    }


def test_document_reindexes_densely():
    plan = plan_from_document(_document())
    assert [n.id for n in plan.nodes] == [0, 1, 2, 3]
    assert plan.root == 0
    assert plan.node(0).kind is PlanNodeKind.PLAN_OP


def test_unknown_kind():
    doc = _document()
    doc["nodes"][2]["kind"] = "INDEX"
    with pytest.raises(PlanGraphError, match="unknown kind"):
        plan_from_document(doc)


def test_edge_to_unknown_node():
    doc = _document()
    doc["edges"].append([99, 10])
    with pytest.raises(PlanGraphError, match="unknown node"):
        plan_from_document(doc)


def test_invalid_json():
    with pytest.raises(PlanGraphError, match="not valid JSON"):
        parse_plan("{nodes:")


def test_feature_builders():
    assert len(plan_op_features("Sort", 10, 1)) == 14
    assert len(column_features("text", 0.5, 0.0, 32)) == 9
    with pytest.raises(PlanGraphError):
        plan_op_features("Teleport", 1, 1)


def test_serialized_plan_parses_back():
    plan = plan_from_document(_document())
    assert parse_plan(serialize_plan(plan)) == plan


def test_shape_signature_ignores_ids_and_child_order():
    a = plan_from_document(_document())
    shuffled = _document(ids=(4, 3, 2, 1))
    shuffled["edges"] = list(reversed(shuffled["edges"]))
    b = plan_from_document(shuffled)
    assert shape_signature(a) == shape_signature(b)


def test_synthetic_workload_is_deterministic_and_valid():
    a = generate_synthetic_workload(seed=4, count=6)
    b = generate_synthetic_workload(seed=4, count=6)
    assert a == b
    assert a.query_ids == [f"q{i:03d}" for i in range(1, 7)]
    for query in a.queries:
        assert query.plan.node(query.plan.root).kind is PlanNodeKind.PLAN_OP


def test_synthetic_workload_parameters_validated():
    with pytest.raises(ValueError):
        generate_synthetic_workload(seed=0, count=0)
    with pytest.raises(ValueError):
        generate_synthetic_workload(seed=0, count=2, depth_range=(3, 2))


def test_load_workload_from_plan_file(tmp_path):
    path = tmp_path / "workload.json"
    path.write_text(json.dumps({"version": 1, "queries": [{"id": "tpch_q6", "plan": _document()}]}))
    workload = load_workload(path)
    assert workload.query_ids == ["tpch_q6"]
    assert workload.plan("tpch_q6").root == 0


def test_synthetic_workload_can_be_frozen_to_plan_files(tmp_path):
    workload = generate_synthetic_workload(seed=4, count=2)
    path = tmp_path / "frozen.json"
    path.write_text(dump_workload(workload))
    assert load_workload(path) == workload
