"""
Evaluation backends - the workload-evaluation contract and two implementations.

``SimulatorBackend`` draws latencies from regime-switching truncated normals
with a checkable ground truth; ``ExternalCommandBackend`` shells out to a
harness that prints ``latency_seconds=<decimal>`` on its last line.
"""

import asyncio
import json
import math
import os
import re
import tempfile
import time
from abc import ABC, abstractmethod
from collections.abc import Sequence
from pathlib import Path

import logfire
import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.stats import truncnorm

from .base import StageMetadata, stable_seed
from .errors import BackendError, KnobSpaceError, UnknownQueryError
from .knobs import scalar_value
from .models import (
    EvaluationResult,
    KnobConfiguration,
    KnobKind,
    KnobSpace,
    Regime,
    SensitiveKnob,
    SimulatedQuery,
    SimulatorSpec,
)

LATENCY_FLOOR_FRACTION = 0.01
LATENCY_PATTERN = re.compile(r"latency_seconds=([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*$")

_METADATA = StageMetadata(phase="tune", action="evaluate", component="eval-backend")


class EvaluationBackend(ABC):
    """Executes one query under one knob configuration."""

    @abstractmethod
    async def evaluate(self, config: KnobConfiguration, query_id: str, repeat: int = 0) -> EvaluationResult: ...


class WorkloadEvaluation(BaseModel):
    total: float
    results: dict[str, EvaluationResult]


async def evaluate_workload(
    backend: EvaluationBackend,
    config: KnobConfiguration,
    query_ids: Sequence[str],
    repeat: int = 0,
) -> WorkloadEvaluation:
    """Evaluate every query concurrently; results keep ``query_ids`` order."""
    results = await asyncio.gather(*(backend.evaluate(config, q, repeat) for q in query_ids))
    by_query = dict(zip(query_ids, results))
    return WorkloadEvaluation(total=math.fsum(r.latency for r in results), results=by_query)


# --- Simulator ---

class SimulatorBackend(EvaluationBackend):
    """Simulated DBMS with ground-truth latency regimes.

    ``time_scale`` > 0 sleeps for the simulated latency times that factor.
    """

    def __init__(self, spec: SimulatorSpec, space: KnobSpace, time_scale: float = 0.0):
        for query in spec.queries:
            for sensitive in query.sensitive:
                if sensitive.knob not in space.names:
                    raise KnobSpaceError(f"simulated query {query.id} uses unknown knob {sensitive.knob!r}")
        self.spec = spec
        self.space = space
        self.time_scale = time_scale
        self._queries = {q.id: q for q in spec.queries}
        # Regime index reported to callers is the rank by ascending multiplier.
        self._rank = {
            q.id: {int(i): rank for rank, i in enumerate(np.argsort([r.mu for r in q.regimes]))}
            for q in spec.queries
        }

    @property
    def query_ids(self) -> list[str]:
        return list(self._queries)

    def _query(self, query_id: str) -> SimulatedQuery:
        query = self._queries.get(query_id)
        if query is None:
            raise UnknownQueryError(f"simulator has no query {query_id!r}")
        return query

    def _scalars(self, query: SimulatedQuery, config: KnobConfiguration) -> np.ndarray:
        values = []
        for sensitive in query.sensitive:
            spec = self.space.get(sensitive.knob)
            values.append(scalar_value(spec, config.values.get(spec.name, spec.default)))
        return np.asarray(values, dtype=float)

    def _regime_position(self, query: SimulatedQuery, scalars: np.ndarray) -> int:
        if not query.thresholds:
            return 0
        return int(np.searchsorted(query.thresholds, float(scalars.mean()), side="right"))

    def regime_of(self, config: KnobConfiguration, query_id: str) -> int:
        """Ground-truth regime index (ascending multiplier order)."""
        query = self._query(query_id)
        return self._rank[query_id][self._regime_position(query, self._scalars(query, config))]

    def mean_latency(self, config: KnobConfiguration, query_id: str) -> float:
        query = self._query(query_id)
        scalars = self._scalars(query, config)
        regime = query.regimes[self._regime_position(query, scalars)]
        weights = np.asarray([s.weight for s in query.sensitive], dtype=float)
        return float(query.base * regime.mu * (1.0 + float(weights @ scalars)))

    async def evaluate(self, config: KnobConfiguration, query_id: str, repeat: int = 0) -> EvaluationResult:
        started = time.perf_counter()
        query = self._query(query_id)
        scalars = self._scalars(query, config)
        position = self._regime_position(query, scalars)
        regime = query.regimes[position]
        mean = self.mean_latency(config, query_id)
        lower = query.base * LATENCY_FLOOR_FRACTION
        rng = np.random.default_rng(stable_seed(self.spec.seed, config.config_id, query_id, repeat))
        a = (lower - mean) / regime.sigma
        latency = float(truncnorm.rvs(a, np.inf, loc=mean, scale=regime.sigma, random_state=rng))
        latency = max(latency, lower)
        if self.time_scale > 0:
            await asyncio.sleep(latency * self.time_scale)
        return EvaluationResult(
            latency=latency,
            regime=self._rank[query_id][position],
            wall_clock=time.perf_counter() - started,
        )


def load_simulator_spec(path: str | Path) -> SimulatorSpec:
    return SimulatorSpec.model_validate_json(Path(path).read_text())


def dump_simulator_spec(spec: SimulatorSpec) -> str:
    return json.dumps(spec.model_dump(mode="json"), indent=2)


def generate_simulator_spec(
    space: KnobSpace,
    query_ids: Sequence[str],
    seed: int = 0,
    regimes: tuple[int, int] = (2, 3),
    sensitive_per_query: int = 2,
    noise: float = 0.03,
) -> SimulatorSpec:
    """Random regime-switching spec over ``space``.

    Multipliers are at least 1.8x apart so the regimes stay separable;
    ``noise`` is sigma relative to the regime's base mean.
    """
    if regimes[0] < 1 or regimes[0] > regimes[1]:
        raise ValueError(f"bad regime range {regimes}")
    rng = np.random.default_rng(seed)
    names = space.names
    queries = []
    for query_id in query_ids:
        base = float(10 ** rng.uniform(-1.0, 1.0))
        count = int(rng.integers(regimes[0], regimes[1] + 1))
        mus = np.cumprod(np.concatenate([[1.0], rng.uniform(1.8, 3.0, size=count - 1)]))
        mus = mus[rng.permutation(count)]
        picked = rng.choice(len(names), size=min(sensitive_per_query, len(names)), replace=False)
        sensitive = [
            SensitiveKnob(knob=names[int(i)], weight=float(rng.uniform(-0.1, 0.15))) for i in sorted(picked)
        ]
        queries.append(
            SimulatedQuery(
                id=query_id,
                base=base,
                sensitive=sensitive,
                regimes=[Regime(mu=float(mu), sigma=float(noise * base * mu)) for mu in mus],
                thresholds=[float(t) for t in np.linspace(0.0, 1.0, count + 1)[1:-1]],
            )
        )
    return SimulatorSpec(seed=seed, queries=queries)


# --- External command ---

class ExternalCommandBackend(EvaluationBackend):
    """Runs ``<cmd> --config <file> --query <id>``, one invocation at a time."""

    def __init__(self, command: Sequence[str], space: KnobSpace, query_ids: Sequence[str] | None = None):
        if not command:
            raise BackendError("external command is empty")
        self.command = list(command)
        self.space = space
        self.query_ids = set(query_ids) if query_ids is not None else None
        self._lock = asyncio.Lock()

    def _payload(self, config: KnobConfiguration) -> dict:
        values: dict[str, float | str] = {}
        for spec in self.space.knobs:
            value = config.values.get(spec.name, spec.default)
            if spec.kind is KnobKind.NUMERIC and spec.integer and not isinstance(value, str):
                value = int(round(float(value)))
            values[spec.name] = value
        return {"config_id": config.config_id, "values": values}

    async def evaluate(self, config: KnobConfiguration, query_id: str, repeat: int = 0) -> EvaluationResult:
        if self.query_ids is not None and query_id not in self.query_ids:
            raise UnknownQueryError(f"external backend has no query {query_id!r}")
        async with self._lock:
            started = time.perf_counter()
            fd, path = tempfile.mkstemp(prefix="knobcf-", suffix=".json")
            try:
                with os.fdopen(fd, "w") as handle:
                    json.dump(self._payload(config), handle)
                with logfire.span("external evaluation of {query_id}", query_id=query_id, **_METADATA.to_dict()):
                    process = await asyncio.create_subprocess_exec(
                        *self.command,
                        "--config",
                        path,
                        "--query",
                        query_id,
                        stdout=asyncio.subprocess.PIPE,
                        stderr=asyncio.subprocess.PIPE,
                    )
                    stdout, stderr = await process.communicate()
            finally:
                os.unlink(path)
            wall_clock = time.perf_counter() - started

        if process.returncode != 0:
            tail = stderr.decode(errors="replace").strip()[-500:]
            raise BackendError(f"command exited {process.returncode} for {query_id}: {tail}")
        return EvaluationResult(latency=parse_latency(stdout.decode(errors="replace")), wall_clock=wall_clock)


def parse_latency(output: str) -> float:
    """Latency from the last non-empty line of harness output.

    Raises:
        BackendError: the line is missing, unparseable, or not a positive finite number.
    """
    lines = [line for line in output.splitlines() if line.strip()]
    match = LATENCY_PATTERN.search(lines[-1].strip()) if lines else None
    if match is None:
        raise BackendError(f"no latency_seconds=<decimal> on last output line: {lines[-1] if lines else ''!r}")
    try:
        return EvaluationResult(latency=float(match.group(1))).latency
    except ValidationError as e:
        raise BackendError(f"invalid latency {match.group(1)!r}") from e
