import json
import sys

import pytest

from knobcf_temporal.tuning.backends import (
    ExternalCommandBackend,
    SimulatorBackend,
    evaluate_workload,
    generate_simulator_spec,
    parse_latency,
)
from knobcf_temporal.tuning.errors import BackendError, KnobSpaceError, UnknownQueryError
from knobcf_temporal.tuning.models import KnobConfiguration, KnobSpace, KnobSpec
from knobcf_temporal.tuning.tuners import lhs_sample

# Echoes the integer knob back as latency: ``<script> --config <file> --query <id>``.
HARNESS = (
    "import json, sys\n"
    "payload = json.load(open(sys.argv[2]))\n"
    "print('running', sys.argv[4])\n"
    "print(f\"latency_seconds={payload['values']['buffer_mb'] / 100}\")\n"
)


async def test_simulator_is_deterministic(backend, space):
    config = lhs_sample(space, 1, seed=0)[0]
    a = await backend.evaluate(config, "q001")
    b = await backend.evaluate(config, "q001")
    c = await backend.evaluate(config, "q001", repeat=1)
    assert a.latency == b.latency
    assert a.latency != c.latency
    assert a.latency > 0


async def test_reported_regime_matches_ground_truth(backend, space, simulator_spec):
    for config in lhs_sample(space, 20, seed=1):
        for query in simulator_spec.queries:
            result = await backend.evaluate(config, query.id)
            assert result.regime == backend.regime_of(config, query.id)
            assert 0 <= result.regime < len(query.regimes)


def test_higher_regimes_are_slower(backend, space, simulator_spec):
    for query in simulator_spec.queries:
        by_regime: dict[int, list[float]] = {}
        for config in lhs_sample(space, 60, seed=2):
            by_regime.setdefault(backend.regime_of(config, query.id), []).append(
                backend.mean_latency(config, query.id)
            )
        ranks = sorted(by_regime)
        for low, high in zip(ranks, ranks[1:]):
            assert max(by_regime[low]) < min(by_regime[high])


async def test_unknown_query(backend, space):
    with pytest.raises(UnknownQueryError):
        await backend.evaluate(space.default_configuration(), "q999")


def test_spec_with_unknown_knob(simulator_spec):
    narrow = KnobSpace(knobs=(KnobSpec(name="other", kind="numeric", min=0, max=1, default=0),))
    with pytest.raises(KnobSpaceError, match="unknown knob"):
        SimulatorBackend(simulator_spec, narrow)


def test_generated_spec_is_seeded(space):
    a = generate_simulator_spec(space, ["q1", "q2", "q3"], seed=11, regimes=(2, 3))
    assert a == generate_simulator_spec(space, ["q1", "q2", "q3"], seed=11, regimes=(2, 3))
    for query in a.queries:
        assert 2 <= len(query.regimes) <= 3
        assert len(query.sensitive) == 2
    with pytest.raises(ValueError):
        generate_simulator_spec(space, ["q1"], regimes=(3, 2))


async def test_evaluate_workload_totals_in_query_order(backend, space, workload):
    config = space.default_configuration()
    evaluation = await evaluate_workload(backend, config, workload.query_ids)
    assert list(evaluation.results) == workload.query_ids
    assert evaluation.total == pytest.approx(sum(r.latency for r in evaluation.results.values()))


@pytest.mark.parametrize(
    ("output", "expected"),
    [
        ("latency_seconds=1.25\n", 1.25),
        ("warming up\nlatency_seconds=3e-2  \n\n", 0.03),
        ("latency_seconds=.5", 0.5),
    ],
)
def test_parse_latency(output, expected):
    assert parse_latency(output) == pytest.approx(expected)


@pytest.mark.parametrize("output", ["", "done\n", "latency_seconds=1.0\nbye\n", "latency_seconds=0", "latency_seconds=-2"])
def test_parse_latency_rejects(output):
    with pytest.raises(BackendError):
        parse_latency(output)


async def test_external_command_rounds_integer_knobs(space):
    backend = ExternalCommandBackend([sys.executable, "-c", HARNESS], space, ["q001"])
    config = KnobConfiguration(values={"buffer_mb": 250.6, "cost": 1.0, "mode": "on"})
    result = await backend.evaluate(config, "q001")
    assert result.latency == pytest.approx(2.51)
    with pytest.raises(UnknownQueryError):
        await backend.evaluate(config, "q002")


async def test_external_command_failure(space):
    backend = ExternalCommandBackend([sys.executable, "-c", "import sys; sys.exit(3)"], space)
    with pytest.raises(BackendError, match="exited 3"):
        await backend.evaluate(space.default_configuration(), "q001")


def test_external_command_must_not_be_empty(space):
    with pytest.raises(BackendError):
        ExternalCommandBackend([], space)


def test_harness_contract_payload(space):
    backend = ExternalCommandBackend(["true"], space)
    payload = backend._payload(space.default_configuration())
    assert json.loads(json.dumps(payload))["values"] == {"buffer_mb": 128, "cost": 1.0, "mode": "on"}
