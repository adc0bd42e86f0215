import numpy as np
import pytest

from knobcf_temporal.tuning.errors import InsufficientDataError, ShapeMismatchError
from knobcf_temporal.tuning.importance import (
    BaggedTreeRegressor,
    RegressionTree,
    fit_regressor,
    normalize_importance,
    permutation_importance,
    query_importance,
)
from knobcf_temporal.tuning.knobs import encode_configuration
from knobcf_temporal.tuning.models import ImportanceVector
from knobcf_temporal.tuning.tuners import lhs_sample


def _samples(space, count=60, seed=0):
    """Latency driven by ``cost`` alone."""
    configs = lhs_sample(space, count, seed)
    return [(encode_configuration(space, c), 1.0 + 10.0 * float(c.values["cost"])) for c in configs]


def test_tree_recovers_a_step():
    X = np.linspace(0, 1, 40)[:, None]
    y = np.where(X[:, 0] > 0.5, 3.0, 1.0)
    tree = RegressionTree(max_depth=2).fit(X, y)
    np.testing.assert_allclose(tree.predict(np.array([[0.1], [0.9]])), [1.0, 3.0])
    assert tree.split_features == {0}


def test_constant_target_makes_a_single_leaf():
    X = np.random.default_rng(0).uniform(size=(30, 3))
    tree = RegressionTree().fit(X, np.full(30, 2.0))
    assert tree.split_features == set()
    np.testing.assert_allclose(tree.predict(X), 2.0)


def test_bagged_regressor_rejects_width_mismatch():
    X = np.random.default_rng(1).uniform(size=(30, 3))
    regressor = BaggedTreeRegressor(n_trees=3, seed=0).fit(X, X[:, 0])
    with pytest.raises(ShapeMismatchError):
        regressor.predict(np.zeros((2, 4)))


def test_fit_regressor_needs_twenty_samples(space):
    with pytest.raises(InsufficientDataError, match="20"):
        fit_regressor(_samples(space, count=19))


def test_only_the_driving_knob_is_important(space):
    samples = _samples(space)
    vector = permutation_importance(fit_regressor(samples, seed=0), samples, space, seed=0)
    assert vector.normalized
    assert sum(vector.scores.values()) == pytest.approx(1.0)
    assert vector.scores["cost"] > 0.9
    assert set(vector.scores) == set(space.names)


def test_query_importance_is_seeded(space):
    samples = _samples(space)
    a = query_importance(space, samples, seed=4, query_id="q001")
    b = query_importance(space, samples, seed=4, query_id="q001")
    assert a == b


def test_all_zero_scores_become_uniform():
    vector = normalize_importance(ImportanceVector(scores={"a": 0.0, "b": 0.0}))
    assert vector.scores == {"a": 0.5, "b": 0.5}


def test_noise_only_latency_gives_no_dominant_knob(space):
    configs = lhs_sample(space, 80, seed=2)
    noise = np.random.default_rng(9).normal(size=len(configs))
    samples = [(encode_configuration(space, c), 5.0 + float(e)) for c, e in zip(configs, noise)]
    vector = permutation_importance(fit_regressor(samples, seed=0), samples, space, seed=0)
    assert max(vector.scores.values()) <= 0.5


def test_knobs_with_equal_additive_effect_share_importance(space):
    configs = lhs_sample(space, 120, seed=3)
    columns = {spec.name: segment for spec, segment in space.segments()}
    samples = []
    for config in configs:
        encoding = encode_configuration(space, config)
        latency = 1.0 + float(np.sum(encoding[columns["buffer_mb"]])) + float(np.sum(encoding[columns["cost"]]))
        samples.append((encoding, latency))
    vector = permutation_importance(fit_regressor(samples, seed=0), samples, space, seed=0)
    assert abs(vector.scores["buffer_mb"] - vector.scores["cost"]) <= 0.15
    assert vector.scores["mode"] < 0.1


def test_linear_latency_is_recovered_on_held_out_points(space):
    def latency(config):
        return 10.0 * float(config.values["cost"])

    train = lhs_sample(space, 50, seed=4)
    held_out = lhs_sample(space, 40, seed=5)
    regressor = fit_regressor([(encode_configuration(space, c), latency(c)) for c in train], seed=0)
    X = np.vstack([encode_configuration(space, c) for c in held_out])
    truth = np.array([latency(c) for c in held_out])
    within = np.abs(regressor.predict(X) - truth) <= 0.1 * truth
    assert within.mean() >= 0.8


def test_constant_latency_predicts_the_constant(space):
    configs = lhs_sample(space, 30, seed=6)
    samples = [(encode_configuration(space, c), 7.5) for c in configs]
    regressor = fit_regressor(samples, seed=0)
    X = np.vstack([encoding for encoding, _ in samples])
    np.testing.assert_allclose(regressor.predict(X), 7.5)
    vector = permutation_importance(regressor, samples, space, seed=0)
    assert list(vector.scores.values()) == pytest.approx([1.0 / len(space.names)] * len(space.names))


def test_out_of_bag_masks_exclude_bootstrap_rows():
    X = np.random.default_rng(2).uniform(size=(40, 2))
    regressor = BaggedTreeRegressor(n_trees=4, seed=1).fit(X, X[:, 0])
    assert regressor.n_fit == 40
    assert all(mask.any() and not mask.all() for mask in regressor.oob_masks)
    predicted = regressor.oob_predict(X)
    covered = ~np.isnan(predicted)
    assert covered.any()
