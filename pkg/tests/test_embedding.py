import numpy as np
import pytest

from knobcf_temporal.tuning.embedding import (
    EMBEDDING_DIM,
    EmbeddingHyperparameters,
    EmbeddingModel,
    ImportanceHead,
    compile_plan,
    embed,
    embedding_loss_and_gradients,
    load_embedding,
    normalize_target,
    save_embedding,
    train_embedding,
)
from knobcf_temporal.tuning.errors import InsufficientDataError, ShapeMismatchError
from knobcf_temporal.tuning.models import PlanGraph, PlanNode, PlanNodeKind
from knobcf_temporal.tuning.plans import plan_op_features, table_features


def _finite_difference_check(params, loss, grads, rng, samples=12, eps=1e-6):
    for name, param in params.items():
        flat = param.reshape(-1)
        for i in rng.choice(flat.size, size=min(samples, flat.size), replace=False):
            saved = flat[i]
            flat[i] = saved + eps
            up = loss()
            flat[i] = saved - eps
            down = loss()
            flat[i] = saved
            numeric = (up - down) / (2 * eps)
            np.testing.assert_allclose(grads[name].reshape(-1)[i], numeric, rtol=1e-4, atol=1e-8, err_msg=name)


def test_embedding_shape_and_determinism(workload):
    plan = workload.plan("q001")
    a = embed(EmbeddingModel(seed=3), plan)
    b = embed(EmbeddingModel(seed=3), plan)
    assert a.shape == (EMBEDDING_DIM,)
    np.testing.assert_array_equal(a, b)


def test_structurally_different_plans_embed_differently(workload):
    model = EmbeddingModel(seed=0)
    vectors = [embed(model, q.plan) for q in workload.queries]
    assert not np.allclose(vectors[0], vectors[1])


def test_embedding_and_head_gradients(workload):
    rng = np.random.default_rng(7)
    model = EmbeddingModel(d=5, seed=1)
    head = ImportanceHead(5, ["a", "b", "c"], hidden=(6, 4), seed=1)
    plans = [compile_plan(q.plan) for q in workload.queries]
    targets = np.vstack([normalize_target(rng.uniform(0.1, 1.0, size=3)) for _ in plans])

    _, grads = embedding_loss_and_gradients(model, head, plans, targets)

    def loss() -> float:
        value, _ = embedding_loss_and_gradients(model, head, plans, targets)
        return value

    _finite_difference_check({**model.params, **head.params}, loss, grads, rng)


def test_normalize_target():
    np.testing.assert_allclose(normalize_target([1.0, 3.0]), [0.25, 0.75])
    with pytest.raises(ValueError):
        normalize_target([0.0, 0.0])
    with pytest.raises(ValueError):
        normalize_target([1.0, -0.5])


def test_training_reduces_loss(workload):
    model = EmbeddingModel(d=8, seed=0)
    head = ImportanceHead(8, ["a", "b", "c"], hidden=(8, 8), seed=0)
    dataset = [
        (workload.plan("q001"), [0.8, 0.1, 0.1]),
        (workload.plan("q002"), [0.1, 0.8, 0.1]),
        (workload.plan("q003"), [0.1, 0.1, 0.8]),
    ]
    trace = train_embedding(model, head, dataset, EmbeddingHyperparameters(max_epochs=300, learning_rate=0.05))
    assert trace.smoothed[-1] < trace.losses[0]


def test_training_rejects_bad_inputs(workload):
    model = EmbeddingModel(d=4, seed=0)
    head = ImportanceHead(4, ["a", "b"], hidden=(4, 4), seed=0)
    with pytest.raises(InsufficientDataError):
        train_embedding(model, head, [])
    with pytest.raises(ShapeMismatchError):
        train_embedding(model, head, [(workload.plan("q001"), [0.2, 0.3, 0.5])])


def test_checkpoint_preserves_embeddings_and_head(tmp_path, workload):
    model = EmbeddingModel(d=6, seed=2)
    head = ImportanceHead(6, ["a", "b"], hidden=(5, 4), seed=2)
    path = tmp_path / "embedding.json"
    save_embedding(model, head, path, config_hash="abc")
    loaded_model, loaded_head = load_embedding(path)
    plan = workload.plan("q002")
    np.testing.assert_allclose(embed(loaded_model, plan), embed(model, plan))
    np.testing.assert_allclose(loaded_head.predict(embed(model, plan)), head.predict(embed(model, plan)))
    assert loaded_head.knob_names == ["a", "b"]


def _three_way_join(child_order: tuple[int, ...]) -> PlanGraph:
    tables = {
        1: PlanNode(id=1, kind=PlanNodeKind.TABLE, features=table_features(1_000, 10)),
        2: PlanNode(id=2, kind=PlanNodeKind.TABLE, features=table_features(50_000, 400)),
        3: PlanNode(id=3, kind=PlanNodeKind.TABLE, features=table_features(7, 1)),
    }
    root = PlanNode(id=0, kind=PlanNodeKind.PLAN_OP, features=plan_op_features("HashJoin", 2_000, 310.5))
    return PlanGraph(
        nodes=(root, *(tables[i] for i in child_order)),
        edges=tuple((i, 0) for i in child_order),
        root=0,
    )


def test_sibling_order_does_not_change_the_embedding():
    model = EmbeddingModel(d=8, seed=4)
    reference = embed(model, _three_way_join((1, 2, 3)))
    for order in ((3, 1, 2), (2, 3, 1), (3, 2, 1)):
        np.testing.assert_allclose(embed(model, _three_way_join(order)), reference, rtol=1e-12, atol=1e-15)


def test_zero_weights_embed_a_single_node_plan_to_zero():
    plan = PlanGraph(
        nodes=(PlanNode(id=0, kind=PlanNodeKind.PLAN_OP, features=plan_op_features("SeqScan", 100, 10)),),
        root=0,
    )
    np.testing.assert_array_equal(embed(EmbeddingModel(d=6, seed=None), plan), np.zeros(6))


def test_single_plan_with_uniform_target_is_memorised(workload):
    model = EmbeddingModel(d=8, seed=0)
    head = ImportanceHead(8, ["a", "b", "c"], hidden=(8, 8), seed=0)
    trace = train_embedding(
        model,
        head,
        [(workload.plan("q001"), [1.0, 1.0, 1.0])],
        EmbeddingHyperparameters(max_epochs=500, learning_rate=0.05),
    )
    assert len(trace.losses) <= 500
    assert min(trace.losses) < 1e-3
    np.testing.assert_allclose(head.predict(embed(model, workload.plan("q001"))), 1.0 / 3.0, atol=0.06)
