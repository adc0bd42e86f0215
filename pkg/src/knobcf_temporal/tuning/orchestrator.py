"""
Uncertainty-aware tuning loop.

Usage:
    from knobcf_temporal.tuning.orchestrator import run_tuning

    result = await run_tuning(workload, space, backend, tuner, classifier, params)
    print(result.report.best_total)

Initialization fully executes a Latin hypercube of configurations and records
each execution under its predicted label. Every later iteration asks the
tuner for a configuration, predicts a label per query, and replaces the
execution with the stored mean whenever the (query, label) history is deep
enough.
"""

import math
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Literal, Optional, Protocol, runtime_checkable

import logfire

from .backends import EvaluationBackend, evaluate_workload
from .base import StageMetadata
from .classifier import estimate, judge
from .models import (
    CategoryLabel,
    EvaluationRecord,
    InferenceThroughput,
    KnobConfiguration,
    KnobSpace,
    LogEvent,
    SeriesPoint,
    TuningParams,
    TuningReport,
    TuningRow,
    Workload,
)
from .store import LabelStore
from .tuners import Tuner, lhs_sample


@runtime_checkable
class LabelPredictor(Protocol):
    def predict_label(self, query_id: str, config: KnobConfiguration) -> CategoryLabel: ...


@runtime_checkable
class AdaptivePredictor(LabelPredictor, Protocol):
    def adapt(
        self,
        observations: Sequence[tuple[str, str, float]],
        configs: Mapping[str, KnobConfiguration],
        seed: int = 0,
    ) -> bool: ...


@dataclass
class TuningResult:
    """Report plus the per-row dataset, per-query log, and final label store."""
    report: TuningReport
    dataset: list[TuningRow]
    events: list[LogEvent]
    store: LabelStore


def nearest_rank_percentile(values: Sequence[float], fraction: float = 0.9) -> float:
    """Smallest value with at least ``fraction`` of the sample at or below it."""
    if not values:
        raise ValueError("percentile of an empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(fraction * len(ordered)))
    return ordered[rank - 1]


async def measure_uncertainty_latency(
    backend: EvaluationBackend,
    config: KnobConfiguration,
    query_ids: Sequence[str],
    repeats: int = 10,
) -> float:
    """Nearest-rank p90 of ``repeats`` full-workload totals."""
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    totals = [(await evaluate_workload(backend, config, query_ids, repeat=r)).total for r in range(1, repeats + 1)]
    return nearest_rank_percentile(totals, 0.9)


class TuningOrchestrator:
    """
    Runs initialization then N recommend/predict/judge iterations.

    Partial ``dataset``, ``events`` and ``store`` stay readable on the
    instance if a backend failure aborts the run.
    """

    def __init__(
        self,
        workload: Workload,
        space: KnobSpace,
        backend: EvaluationBackend,
        tuner: Tuner,
        predictor: Optional[LabelPredictor],
        params: TuningParams,
        mode: Literal["knobcf", "full-eval"] = "knobcf",
        measure_p90: bool = True,
        config_hash: str = "",
        inference: Optional[InferenceThroughput] = None,
    ):
        self.workload = workload
        self.space = space
        self.backend = backend
        self.tuner = tuner
        self.predictor = predictor if mode == "knobcf" else None
        self.params = params
        self.mode = mode
        self.measure_p90 = measure_p90
        self.config_hash = config_hash
        self.inference = inference

        self.query_ids = workload.query_ids
        self.store = LabelStore(params.task_id)
        self.dataset: list[TuningRow] = []
        self.events: list[LogEvent] = []
        self.configs: dict[str, KnobConfiguration] = {}
        self.iteration_times: list[float] = []
        self.judge_overheads: list[float] = []
        self.series: list[SeriesPoint] = []
        self._elapsed = 0.0
        self._metadata = StageMetadata(phase="tune", action="iterate", component="orchestrator",
                                       task_id=params.task_id)

    @property
    def warmup_iterations(self) -> int:
        """Iterations executed in full to collect the fine-tuning set."""
        if isinstance(self.predictor, AdaptivePredictor):
            return min(self.params.finetune_iterations, self.params.iterations)
        return 0

    async def run(self) -> TuningResult:
        with logfire.span("tuning run {task_id} ({mode})", mode=self.mode, **self._metadata.to_dict()):
            await self.initialize()
            for iteration in range(1, self.params.iterations + 1):
                await self.iterate(iteration)
                if iteration == self.warmup_iterations:
                    self.adapt()
            report = await self.build_report()
        return TuningResult(report=report, dataset=self.dataset, events=self.events, store=self.store)

    # --- Phases ---

    async def initialize(self) -> None:
        configs = lhs_sample(self.space, self.params.init_count, self.params.seed)
        with logfire.span("initialize {count} LHS points", count=len(configs),
                          **StageMetadata("tune", "initialize", "orchestrator").to_dict(self.params.task_id)):
            for index, config in enumerate(configs):
                evaluation = await evaluate_workload(self.backend, config, self.query_ids)
                labels = self._predict(config)
                breakdown: dict[str, float] = {}
                for query_id in self.query_ids:
                    result = evaluation.results[query_id]
                    breakdown[query_id] = result.latency
                    self._record(index, "init", config, query_id, "executed", result.latency, labels, result.regime)
                self._append_row(index, "init", config, breakdown, skipped=0, executed_seconds=evaluation.total)
                self._elapsed += evaluation.total
            if configs:
                self._add_series_point()

    async def iterate(self, iteration: int) -> None:
        started = time.perf_counter()
        config = self.tuner.recommend()
        labels = self._predict(config)
        judging = self.predictor is not None and iteration > self.warmup_iterations

        estimated: dict[str, float] = {}
        to_execute: list[str] = []
        for query_id in self.query_ids:
            label = labels.get(query_id)
            if judging and label is not None and judge(label, self.store, query_id, self.params.m_min,
                                                       self.params.task_id):
                estimated[query_id] = estimate(label, self.store, query_id, self.params.m_min, self.params.task_id)
            else:
                to_execute.append(query_id)
        overhead = time.perf_counter() - started

        evaluation = await evaluate_workload(self.backend, config, to_execute)
        breakdown: dict[str, float] = {}
        for query_id in self.query_ids:
            if query_id in estimated:
                breakdown[query_id] = estimated[query_id]
                self._record(iteration, "tune", config, query_id, "estimated", estimated[query_id], labels, None)
            else:
                result = evaluation.results[query_id]
                breakdown[query_id] = result.latency
                self._record(iteration, "tune", config, query_id, "executed", result.latency, labels, result.regime)

        row = self._append_row(
            iteration, "tune", config, breakdown, skipped=len(estimated), executed_seconds=evaluation.total
        )
        # Estimated queries cost no execution time; wall-clock judging is kept apart in judge_overheads.
        self.iteration_times.append(evaluation.total)
        self.judge_overheads.append(overhead)
        self._elapsed += evaluation.total
        self._add_series_point()
        logfire.debug(
            "iteration {iteration}: total {total:.4f}s, {skipped}/{queries} estimated",
            iteration=iteration,
            total=row.total,
            skipped=row.skipped,
            queries=len(self.query_ids),
        )

    def adapt(self) -> None:
        """Fine-tune on this task's executions so far, then relabel the store."""
        predictor = self.predictor
        if not isinstance(predictor, AdaptivePredictor):
            return
        with logfire.span("adapt classifier after warm-up",
                          **StageMetadata("finetune", "classifier", "orchestrator").to_dict(self.params.task_id)):
            observations = [(r.query_id, r.config_id, r.latency) for r in self.store.records]
            if predictor.adapt(observations, self.configs, seed=self.params.seed):
                self.store = self.store.relabel(
                    lambda record: predictor.predict_label(record.query_id, self.configs[record.config_id])
                )
                logfire.info("Relabelled {count} stored executions", count=len(self.store))

    async def build_report(self) -> TuningReport:
        best_config, best_total = self.tuner.best()
        tune_events = [e for e in self.events if e.phase == "tune"]
        p90 = None
        if self.measure_p90:
            p90 = await measure_uncertainty_latency(
                self.backend, best_config, self.query_ids, self.params.p90_repeats
            )
        times = self.iteration_times
        return TuningReport(
            task_id=self.params.task_id,
            config_hash=self.config_hash,
            mode=self.mode,
            best_config=best_config,
            best_config_id=best_config.config_id,
            best_total=best_total,
            iteration_times=times,
            average_iteration_time=sum(times) / len(times) if times else 0.0,
            init_executed=sum(1 for e in self.events if e.phase == "init"),
            executed_queries=sum(1 for e in tune_events if e.mode == "executed"),
            estimated_queries=sum(1 for e in tune_events if e.mode == "estimated"),
            throughput_series=self.series,
            best_throughput=len(self.query_ids) / best_total,
            p90_latency=p90,
            inference=self.inference,
        )

    # --- Bookkeeping ---

    def _predict(self, config: KnobConfiguration) -> dict[str, CategoryLabel]:
        if self.predictor is None:
            return {}
        return {q: self.predictor.predict_label(q, config) for q in self.query_ids}

    def _record(
        self,
        iteration: int,
        phase: Literal["init", "tune"],
        config: KnobConfiguration,
        query_id: str,
        mode: Literal["executed", "estimated"],
        latency: float,
        labels: dict[str, CategoryLabel],
        regime: Optional[int],
    ) -> None:
        label = labels.get(query_id)
        if mode == "executed" and label is not None:
            self.store.add(
                EvaluationRecord(query_id=query_id, config_id=config.config_id, latency=latency, label=label)
            )
        self.events.append(
            LogEvent(
                iteration=iteration,
                phase=phase,
                config_id=config.config_id,
                query_id=query_id,
                mode=mode,
                latency=latency,
                label=str(label) if label is not None else "",
                regime=regime,
            )
        )

    def _append_row(
        self,
        iteration: int,
        phase: Literal["init", "tune"],
        config: KnobConfiguration,
        breakdown: dict[str, float],
        skipped: int,
        executed_seconds: float,
    ) -> TuningRow:
        self.configs[config.config_id] = config
        row = TuningRow(
            iteration=iteration,
            phase=phase,
            config=config,
            config_id=config.config_id,
            total=math.fsum(breakdown.values()),
            breakdown=breakdown,
            skipped=skipped,
            executed_seconds=executed_seconds,
        )
        self.dataset.append(row)
        self.tuner.observe(config, row.total)
        return row

    def _add_series_point(self) -> None:
        best = min(row.total for row in self.dataset)
        self.series.append(
            SeriesPoint(
                cumulative_seconds=self._elapsed,
                best_total=best,
                throughput=len(self.query_ids) / best,
            )
        )


async def run_tuning(
    workload: Workload,
    space: KnobSpace,
    backend: EvaluationBackend,
    tuner: Tuner,
    predictor: LabelPredictor,
    params: TuningParams,
    measure_p90: bool = True,
    config_hash: str = "",
    inference: Optional[InferenceThroughput] = None,
) -> TuningResult:
    """The uncertainty-aware loop with judge/estimate enabled."""
    orchestrator = TuningOrchestrator(
        workload, space, backend, tuner, predictor, params, "knobcf", measure_p90, config_hash, inference
    )
    return await orchestrator.run()


async def run_full_eval_baseline(
    workload: Workload,
    space: KnobSpace,
    backend: EvaluationBackend,
    tuner: Tuner,
    params: TuningParams,
    measure_p90: bool = True,
    config_hash: str = "",
) -> TuningResult:
    """Same loop with every query executed."""
    orchestrator = TuningOrchestrator(
        workload, space, backend, tuner, None, params, "full-eval", measure_p90, config_hash
    )
    return await orchestrator.run()
