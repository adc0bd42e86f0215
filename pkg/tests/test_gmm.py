from collections import Counter

import numpy as np
import pytest

from knobcf_temporal.tuning.backends import SimulatorBackend, generate_simulator_spec
from knobcf_temporal.tuning.errors import InsufficientDataError, ShapeMismatchError
from knobcf_temporal.tuning.gmm import assign_label, bic, fit_gmm, label_dataset, responsibilities
from knobcf_temporal.tuning.models import CategoryLabel, GaussianMixture, MixtureComponent
from knobcf_temporal.tuning.tuners import lhs_sample


@pytest.fixture
def bimodal() -> np.ndarray:
    rng = np.random.default_rng(42)
    return np.concatenate([rng.normal(5.0, 0.5, 50), rng.normal(20.0, 0.5, 50)])


@pytest.fixture
def symmetric() -> GaussianMixture:
    return GaussianMixture(
        components=(
            MixtureComponent(weight=0.5, mean=5.0, variance=0.25),
            MixtureComponent(weight=0.5, mean=20.0, variance=0.25),
        )
    )


def test_recovers_two_components(bimodal):
    mixture = fit_gmm(bimodal, max_components=4, seed=0)
    assert mixture.k == 2
    low, high = mixture.components
    assert abs(low.mean - 5.0) < 0.5 and abs(high.mean - 20.0) < 0.5
    assert abs(low.weight - 0.5) < 0.1 and abs(high.weight - 0.5) < 0.1


def test_log_likelihood_never_decreases(bimodal):
    trace = np.asarray(fit_gmm(bimodal, max_components=2, seed=1).trace)
    assert len(trace) >= 1
    assert np.all(np.diff(trace) >= -1e-9)


def test_single_cluster_prefers_one_component():
    latencies = np.random.default_rng(3).normal(10.0, 0.2, 60)
    assert fit_gmm(latencies, max_components=4, seed=0).k == 1


def test_identical_latencies_fit_one_component():
    mixture = fit_gmm([2.0] * 10, max_components=3)
    assert mixture.k == 1
    assert mixture.components[0].mean == pytest.approx(2.0)
    assert mixture.components[0].variance > 0


def test_input_validation():
    with pytest.raises(InsufficientDataError):
        fit_gmm([1.0] * 7, max_components=2)
    with pytest.raises(ValueError):
        fit_gmm([1.0] * 7 + [-1.0], max_components=2)


def test_bic_penalty():
    assert bic(-10.0, 2, 100) == pytest.approx(20.0 + 5 * np.log(100))


def test_labels_follow_responsibilities(symmetric):
    assert assign_label(symmetric, 5.0, width=4) == CategoryLabel.parse("1000")
    assert assign_label(symmetric, 20.0, width=2) == CategoryLabel.parse("01")
    np.testing.assert_allclose(responsibilities(symmetric, 12.5), [0.5, 0.5])
    assert assign_label(symmetric, 12.5, width=2, tau=0.2) == CategoryLabel.parse("11")


def test_label_never_empty(symmetric):
    label = assign_label(symmetric, 1000.0, width=2, tau=1.0)
    assert sum(label.bits) == 1


def test_label_width_below_components(symmetric):
    with pytest.raises(ShapeMismatchError):
        assign_label(symmetric, 5.0, width=1)


def test_label_dataset(bimodal):
    samples = {"q1": [(f"c{i}", float(x)) for i, x in enumerate(bimodal)]}
    labeled = label_dataset(samples, width=4, seed=0)
    assert labeled.mixtures["q1"].k == 2
    assert labeled.label("q1", "c0") == CategoryLabel.parse("1000")
    assert labeled.label("q1", "c99") == CategoryLabel.parse("0100")


def test_label_dataset_names_thin_query(bimodal):
    samples = {"q1": [(f"c{i}", float(x)) for i, x in enumerate(bimodal)], "q7": [("c0", 1.0)] * 3}
    with pytest.raises(InsufficientDataError, match="q7"):
        label_dataset(samples, width=4)


async def test_mixture_labels_agree_with_simulated_regimes(space):
    spec = generate_simulator_spec(space, ["q1", "q2"], seed=11, regimes=(2, 2))
    backend = SimulatorBackend(spec, space)
    configs = lhs_sample(space, 300, seed=8)
    samples: dict[str, list[tuple[str, float]]] = {"q1": [], "q2": []}
    truth: dict[tuple[str, str], int] = {}
    for config in configs:
        for query_id in samples:
            result = await backend.evaluate(config, query_id)
            samples[query_id].append((config.config_id, result.latency))
            truth[(query_id, config.config_id)] = result.regime
    labeled = label_dataset(samples, width=4, seed=0)

    for query_id, observations in samples.items():
        mixture = labeled.mixtures[query_id]
        assert mixture.k >= 2
        votes: dict[int, Counter] = {}
        for config_id, latency in observations:
            component = int(np.argmax(responsibilities(mixture, latency)))
            votes.setdefault(component, Counter())[truth[(query_id, config_id)]] += 1
        agreeing = sum(counter.most_common(1)[0][1] for counter in votes.values())
        assert agreeing / len(observations) >= 0.9
