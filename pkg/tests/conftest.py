"""Shared fixtures: a small knob space, synthetic workload, simulator and stub predictors."""

import json
from itertools import count
from pathlib import Path

import logfire
import pytest

from knobcf_temporal.tuning.backends import SimulatorBackend, dump_simulator_spec, generate_simulator_spec
from knobcf_temporal.tuning.knobs import dump_knob_space
from knobcf_temporal.tuning.models import (
    CategoryLabel,
    KnobConfiguration,
    KnobSpace,
    KnobSpec,
    SimulatorSpec,
    Workload,
)
from knobcf_temporal.tuning.plans import generate_synthetic_workload

logfire.configure(send_to_logfire=False, console=False)


@pytest.fixture
def space() -> KnobSpace:
    return KnobSpace(
        knobs=(
            KnobSpec(name="buffer_mb", kind="numeric", min=16, max=1024, default=128, integer=True),
            KnobSpec(name="cost", kind="numeric", min=0.5, max=4.0, default=1.0),
            KnobSpec(name="mode", kind="categorical", levels=("off", "on", "auto"), default="on"),
        )
    )


@pytest.fixture
def workload() -> Workload:
    return generate_synthetic_workload(seed=1, count=3)


@pytest.fixture
def simulator_spec(space: KnobSpace, workload: Workload) -> SimulatorSpec:
    return generate_simulator_spec(space, workload.query_ids, seed=5)


@pytest.fixture
def backend(simulator_spec: SimulatorSpec, space: KnobSpace) -> SimulatorBackend:
    return SimulatorBackend(simulator_spec, space)


class NeverMatchPredictor:
    """Every prediction is a label no earlier prediction used."""

    def __init__(self, width: int = 16):
        self.width = width
        self._counter = count(1)

    def predict_label(self, query_id: str, config: KnobConfiguration) -> CategoryLabel:
        value = next(self._counter)
        return CategoryLabel(bits=tuple((value >> i) & 1 for i in range(self.width)))


class RegimeOracle:
    """Predicts the simulator's ground-truth regime as a one-hot label."""

    def __init__(self, backend: SimulatorBackend, width: int = 4):
        self.backend = backend
        self.width = width

    def predict_label(self, query_id: str, config: KnobConfiguration) -> CategoryLabel:
        return CategoryLabel.one_hot(self.backend.regime_of(config, query_id), self.width)


class AdaptiveRegimeOracle(RegimeOracle):
    """Regime oracle that records fine-tuning calls."""

    def __init__(self, backend: SimulatorBackend, width: int = 4):
        super().__init__(backend, width)
        self.adapt_calls: list[int] = []

    def adapt(self, observations, configs, seed: int = 0) -> bool:
        self.adapt_calls.append(len(observations))
        return True


@pytest.fixture
def never_match() -> NeverMatchPredictor:
    return NeverMatchPredictor()


@pytest.fixture
def oracle(backend: SimulatorBackend) -> RegimeOracle:
    return RegimeOracle(backend)


@pytest.fixture
def task_config(tmp_path: Path, space: KnobSpace, workload: Workload, simulator_spec: SimulatorSpec) -> Path:
    """A run config file with small sizes over the fixture space, workload and simulator."""
    data = tmp_path / "data"
    data.mkdir()
    (data / "knobs.json").write_text(dump_knob_space(space))
    (data / "workload.json").write_text(json.dumps({"version": 1, "synthetic": {"seed": 1, "count": 3}}))
    (data / "simulator.json").write_text(dump_simulator_spec(simulator_spec))
    config = {
        "knob_space": "data/knobs.json",
        "workload": "data/workload.json",
        "backend": {"simulator": "data/simulator.json"},
        "tuner": "random",
        "n": 4,
        "init_count": 10,
        "iterations": 6,
        "seed": 3,
        "finetune_iterations": 2,
        "candidate_count": 50,
        "p90_repeats": 3,
        "pretrain_evaluations": 40,
        "task_id": "fixture",
        "output_dir": "runs",
    }
    path = tmp_path / "task.json"
    path.write_text(json.dumps(config))
    return path
