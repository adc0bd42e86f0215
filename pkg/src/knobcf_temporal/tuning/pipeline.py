"""
KnobCF pipeline - the command operations behind the ``knobcf`` CLI.

Usage:
    from knobcf_temporal.tuning.pipeline import cmd_pretrain, cmd_tune

    await cmd_pretrain([config], Path("runs/pretrain"))
    report = await cmd_tune(config, Path("runs/tune"), checkpoint_dir=Path("runs/pretrain"))

Each command writes one run directory of immutable artifacts and refuses to
overwrite an existing one unless ``force`` is set.
"""

import json
import math
import shutil
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import logfire
import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..config.run_config import RunConfig
from .backends import (
    EvaluationBackend,
    ExternalCommandBackend,
    SimulatorBackend,
    dump_simulator_spec,
    evaluate_workload,
    generate_simulator_spec,
    load_simulator_spec,
)
from .base import StageMetadata, short_hash, stable_seed
from .classifier import (
    ClassificationMetrics,
    ClassifierHyperparameters,
    ClassifierModel,
    KnobClassifier,
    Provenance,
    TrainingSet,
    check_compatible,
    classification_metrics,
    from_checkpoint as classifier_from_checkpoint,
    load_classifier,
    predict_many,
    save_classifier,
    to_checkpoint as classifier_to_checkpoint,
    train,
)
from .embedding import (
    EMBEDDING_DIM,
    EmbeddingHyperparameters,
    EmbeddingModel,
    ImportanceHead,
    embed,
    load_embedding,
    save_embedding,
    train_embedding,
)
from .errors import (
    BackendError,
    ConfigError,
    InsufficientDataError,
    LogFormatError,
)
from .gmm import MIN_SAMPLES, assign_label, fit_gmm, label_dataset
from .importance import query_importance
from .knobs import encode_configuration, load_knob_space, union_space
from .models import (
    CategoryLabel,
    KnobConfiguration,
    KnobSpace,
    LogEvent,
    TuningReport,
    TuningRow,
    Workload,
)
from .orchestrator import TuningOrchestrator, TuningResult
from .plans import load_workload
from .store import read_csv, write_csv
from .tuners import lhs_sample, make_tuner

SWEEP_DIMENSIONS = (8, 10, 12, 14, 16)
LOG_COLUMNS = ["iteration", "phase", "config_id", "query_id", "mode", "latency", "label", "regime"]
SERIES_COLUMNS = ["cumulative_seconds", "best_total", "throughput"]
PARTIAL_MARKER = ".partial"


# --- Files ---

def write_json(path: Path, payload: Any) -> None:
    """Sorted-key JSON with a trailing newline, so reruns are byte-identical."""
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def prepare_run_dir(path: Path, force: bool = False) -> Path:
    """Create ``path``; an existing non-empty directory needs ``force``.

    A directory left behind by a failed run carries a ``.partial`` marker and
    is cleared without ``force``.
    """
    if path.exists() and (path / PARTIAL_MARKER).exists():
        logfire.info("Clearing partial run directory {path}", path=str(path))
        shutil.rmtree(path)
    elif path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"run directory {path} already exists; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- Task loading ---

@dataclass
class Task:
    """One tuning task: its config plus the loaded space, workload and backend."""
    config: RunConfig
    space: KnobSpace
    workload: Workload
    backend: EvaluationBackend


def build_backend(config: RunConfig, space: KnobSpace, workload: Workload) -> EvaluationBackend:
    if config.backend.simulator is not None:
        spec = load_simulator_spec(config.backend.simulator)
        if spec.max_regimes > config.n:
            raise ConfigError(
                f"simulator has queries with {spec.max_regimes} regimes but output dimension n is {config.n}"
            )
        return SimulatorBackend(spec, space, time_scale=config.backend.time_scale)
    assert config.backend.command is not None
    return ExternalCommandBackend(config.backend.command, space, workload.query_ids)


def load_task(config: RunConfig) -> Task:
    space = load_knob_space(config.knob_space)
    workload = load_workload(config.workload)
    return Task(config=config, space=space, workload=workload, backend=build_backend(config, space, workload))


@dataclass
class TaskSamples:
    """Executed (config, latency) observations per query for one task."""
    task: Task
    configs: dict[str, KnobConfiguration] = field(default_factory=dict)
    samples: dict[str, list[tuple[str, float]]] = field(default_factory=dict)


def load_history(task: Task, run_dir: Path) -> TaskSamples:
    """Executed rows of a previous tune run, joined with its dataset for the configurations."""
    rows = [TuningRow.model_validate(r) for r in json.loads((run_dir / "dataset.json").read_text())["rows"]]
    events = read_evaluation_log(run_dir / "evaluation_log.csv")
    out = TaskSamples(task=task, configs={r.config_id: r.config for r in rows})
    for event in events:
        if event.mode == "executed":
            out.samples.setdefault(event.query_id, []).append((event.config_id, event.latency))
    return out


async def collect_samples(task: Task) -> TaskSamples:
    """Fully evaluate ``pretrain_evaluations`` LHS configurations, or read the task history."""
    config = task.config
    if config.history is not None:
        return load_history(task, config.history)
    configs = lhs_sample(task.space, config.pretrain_evaluations, stable_seed(config.seed, config.task_id, "pretrain"))
    out = TaskSamples(task=task)
    with logfire.span("evaluate {count} pretraining configurations", count=len(configs),
                      **StageMetadata("pretrain", "evaluate", "eval-backend").to_dict(config.task_id)):
        for knob_config in configs:
            evaluation = await evaluate_workload(task.backend, knob_config, task.workload.query_ids)
            out.configs[knob_config.config_id] = knob_config
            for query_id, result in evaluation.results.items():
                out.samples.setdefault(query_id, []).append((knob_config.config_id, result.latency))
    return out


# --- pretrain ---

async def cmd_pretrain(
    configs: Sequence[RunConfig],
    out_dir: Path,
    seed: Optional[int] = None,
    force: bool = False,
    embedding_hp: Optional[EmbeddingHyperparameters] = None,
    classifier_hp: Optional[ClassifierHyperparameters] = None,
) -> dict:
    """Importance oracle -> embedding -> mixture labels -> classifier, over historical tasks.

    Raises:
        ConfigError: no tasks, or tasks disagree on the output dimension n.
        InsufficientDataError: a query has fewer than 8 samples (named).
    """
    if not configs:
        raise ConfigError("pretrain needs at least one task config")
    widths = {c.n for c in configs}
    if len(widths) > 1:
        raise ConfigError(f"tasks disagree on output dimension n: {sorted(widths)}")
    (n,) = widths
    seed = configs[0].seed if seed is None else seed
    embedding_hp = embedding_hp or EmbeddingHyperparameters(seed=seed)
    classifier_hp = classifier_hp or ClassifierHyperparameters(seed=seed)
    config_hash = short_hash([[c.config_hash for c in configs], seed])
    prepare_run_dir(out_dir, force)

    tasks = [load_task(c) for c in configs]
    space = union_space([t.space for t in tasks])
    task_ids = [t.config.task_id for t in tasks]

    with logfire.span("pretrain on {tasks}", tasks=task_ids,
                      **StageMetadata("pretrain", "run", "pipeline").to_dict(",".join(task_ids))):
        collected = [await collect_samples(t) for t in tasks]
        for entry in collected:
            thin = {q: len(s) for q, s in entry.samples.items() if len(s) < MIN_SAMPLES}
            if thin:
                raise InsufficientDataError(
                    f"task {entry.task.config.task_id}: queries with fewer than {MIN_SAMPLES} samples: {thin}"
                )

        # Importance targets per (task, query)
        importance_set = []
        importance_report: dict[str, dict[str, dict[str, float]]] = {}
        for entry in collected:
            task_id = entry.task.config.task_id
            importance_report[task_id] = {}
            for query_id, observations in entry.samples.items():
                pairs = [(encode_configuration(space, entry.configs[c]), lat) for c, lat in observations]
                vector = query_importance(space, pairs, seed=stable_seed(seed, task_id, query_id),
                                          query_id=query_id, task_id=task_id)
                importance_set.append((entry.task.workload.plan(query_id), vector.as_list(space.names)))
                importance_report[task_id][query_id] = vector.scores

        model = EmbeddingModel(d=EMBEDDING_DIM, seed=seed)
        head = ImportanceHead(EMBEDDING_DIM, space.names, seed=seed)
        embedding_trace = train_embedding(model, head, importance_set, embedding_hp, task_id=",".join(task_ids))

        # Labels and classifier rows
        rows = []
        row_index = []
        components: dict[str, dict[str, int]] = {}
        for entry in collected:
            task_id = entry.task.config.task_id
            labeled = label_dataset(entry.samples, n, seed=stable_seed(seed, task_id), tau=entry.task.config.tau,
                                    task_id=task_id)
            components[task_id] = {q: m.k for q, m in labeled.mixtures.items()}
            embeddings = {q: embed(model, entry.task.workload.plan(q)) for q in entry.samples}
            for record in labeled.records:
                rows.append(
                    (
                        embeddings[record.query_id],
                        encode_configuration(space, entry.configs[record.config_id]),
                        record.label,
                    )
                )
                row_index.append(
                    {
                        "task_id": task_id,
                        "query_id": record.query_id,
                        "config_id": record.config_id,
                        "latency": record.latency,
                        "label": str(record.label),
                    }
                )
        full_set = TrainingSet.from_rows(rows)
        train_set, holdout_set = full_set.split(0.2, seed=seed)
        classifier = ClassifierModel(EMBEDDING_DIM, space.width, n, seed=seed)
        classifier_trace = train(classifier, train_set, classifier_hp, task_id=",".join(task_ids))
        holdout = classification_metrics(predict_many(classifier, holdout_set), holdout_set.truths())
        logfire.info(
            "holdout accuracy {accuracy:.3f}, precision {precision:.3f}, recall {recall:.3f}",
            accuracy=holdout.accuracy,
            precision=holdout.precision,
            recall=holdout.recall,
        )

        facade = KnobClassifier(space, tasks[0].workload, model, classifier, task_id=task_ids[0])
        inference = facade.measure_inference_throughput(lhs_sample(space, 10, seed))

    save_embedding(model, head, out_dir / "embedding.json", config_hash=config_hash)
    save_classifier(
        classifier_to_checkpoint(classifier, space, Provenance(pretrain_tasks=task_ids), config_hash),
        out_dir / "classifier.json",
    )
    write_json(out_dir / "training_set.json", {"config_hash": config_hash, "rows": row_index})
    report = {
        "config_hash": config_hash,
        "tasks": task_ids,
        "n": n,
        "rows": len(full_set),
        "embedding": {
            "epochs": len(embedding_trace.losses),
            "final_loss": embedding_trace.final,
            "stopped_early": embedding_trace.stopped_early,
        },
        "classifier": {
            "epochs": len(classifier_trace.losses),
            "final_loss": classifier_trace.final,
            "stopped_early": classifier_trace.stopped_early,
        },
        "holdout": holdout.model_dump(),
        "mixture_components": components,
        "importance": importance_report,
        "inference": inference.model_dump(),
    }
    write_json(out_dir / "pretrain_report.json", report)
    return report


# --- finetune ---

def load_knob_classifier(checkpoint_dir: Path, task: Task) -> tuple[KnobClassifier, Provenance]:
    """Load checkpoints and bind them to ``task``'s workload.

    Raises:
        IncompatibleCheckpointError: d, encoding width or n disagree (named).
    """
    embedding_model, _ = load_embedding(checkpoint_dir / "embedding.json")
    checkpoint = load_classifier(checkpoint_dir / "classifier.json")
    check_compatible(checkpoint, embedding_model.d, task.space, task.config.n)
    model = classifier_from_checkpoint(checkpoint)
    classifier = KnobClassifier(
        checkpoint.space,
        task.workload,
        embedding_model,
        model,
        task_id=task.config.task_id,
        hyperparameters=ClassifierHyperparameters(seed=task.config.seed),
        tau=task.config.tau,
    )
    return classifier, checkpoint.provenance


async def cmd_finetune(config: RunConfig, checkpoint_dir: Path, out_dir: Path, force: bool = False) -> dict:
    """Few-shot adaptation outside a tuning run.

    Executes the task's LHS initialization plus ``finetune_iterations``
    random configurations, fine-tunes the classifier on them, and writes
    checkpoints tagged with this task. The embedding checkpoint is copied
    unchanged.
    """
    task = load_task(config)
    classifier, provenance = load_knob_classifier(checkpoint_dir, task)
    prepare_run_dir(out_dir, force)
    configs = lhs_sample(task.space, config.init_count, config.seed)
    tuner = make_tuner("random", task.space, config.seed)
    configs += [tuner.recommend() for _ in range(config.finetune_iterations)]

    observations: list[tuple[str, str, float]] = []
    by_id: dict[str, KnobConfiguration] = {}
    with logfire.span("finetune on {count} configurations", count=len(configs),
                      **StageMetadata("finetune", "run", "pipeline").to_dict(config.task_id)):
        for knob_config in configs:
            evaluation = await evaluate_workload(task.backend, knob_config, task.workload.query_ids)
            by_id[knob_config.config_id] = knob_config
            for query_id, result in evaluation.results.items():
                observations.append((query_id, knob_config.config_id, result.latency))
        adapted = classifier.adapt(observations, by_id, seed=config.seed)

    shutil.copyfile(checkpoint_dir / "embedding.json", out_dir / "embedding.json")
    provenance = provenance.model_copy(update={"finetune_task": config.task_id if adapted else None})
    save_classifier(
        classifier_to_checkpoint(classifier.model, classifier.space, provenance, config.config_hash),
        out_dir / "classifier.json",
    )
    summary = {"config_hash": config.config_hash, "adapted": adapted, "configurations": len(configs)}
    write_json(out_dir / "finetune_report.json", summary)
    return summary


# --- tune ---

def write_evaluation_log(path: Path, events: Sequence[LogEvent], config_hash: str) -> None:
    frame = pd.DataFrame(
        [
            [e.iteration, e.phase, e.config_id, e.query_id, e.mode, repr(e.latency), e.label,
             "" if e.regime is None else e.regime]
            for e in events
        ],
        columns=LOG_COLUMNS,
    )
    write_csv(frame, path, config_hash)


def read_evaluation_log(path: Path) -> list[LogEvent]:
    """Parse an evaluation log.

    Raises:
        LogFormatError: empty log, missing columns, or a malformed row (line number named).
    """
    frame, _ = read_csv(path)
    missing = [c for c in LOG_COLUMNS if c not in frame.columns]
    if missing:
        raise LogFormatError(f"{path}: missing columns {missing}")
    if frame.empty:
        raise LogFormatError(f"{path}: log has no rows")
    events = []
    for line, row in enumerate(frame.to_dict(orient="records"), start=3):
        try:
            if row["regime"] == "":
                row["regime"] = None
            events.append(LogEvent.model_validate(row))
        except ValidationError as e:
            raise LogFormatError(f"{path}: line {line}: {e.errors()[0]['msg']}") from e
    return events


def write_tuning_artifacts(out_dir: Path, orchestrator: TuningOrchestrator, config_hash: str) -> None:
    """Evaluation log, label store and dataset; safe to call on a partial run."""
    write_evaluation_log(out_dir / "evaluation_log.csv", orchestrator.events, config_hash)
    orchestrator.store.save(out_dir / "label_store.csv", config_hash)
    write_json(
        out_dir / "dataset.json",
        {"config_hash": config_hash, "rows": [row.model_dump(mode="json") for row in orchestrator.dataset]},
    )


def write_timing(path: Path, orchestrator: TuningOrchestrator, config_hash: str) -> None:
    """Wall-clock judging overhead per iteration, next to the reproducible report."""
    with_overhead = [t + o for t, o in zip(orchestrator.iteration_times, orchestrator.judge_overheads)]
    write_json(
        path,
        {
            "config_hash": config_hash,
            "judge_overhead_seconds": orchestrator.judge_overheads,
            "iteration_seconds_with_overhead": with_overhead,
            "average_iteration_seconds_with_overhead": (
                math.fsum(with_overhead) / len(with_overhead) if with_overhead else 0.0
            ),
        },
    )


async def cmd_tune(
    config: RunConfig,
    out_dir: Path,
    checkpoint_dir: Optional[Path] = None,
    baseline: bool = False,
    force: bool = False,
    measure_p90: bool = True,
) -> TuningReport:
    """Run the tuning loop (or the full-evaluation baseline) and write its artifacts.

    Raises:
        ConfigError: KnobCF mode without checkpoints.
        IncompatibleCheckpointError: checkpoint dimensions disagree with the config.
        BackendError: after partial artifacts are written.
    """
    task = load_task(config)
    params = config.tuning_params()
    tuner = make_tuner(config.tuner, task.space, config.seed, config.candidate_count)
    predictor = None
    inference = None
    if not baseline:
        if checkpoint_dir is None:
            raise ConfigError("tune needs --checkpoints unless --baseline full-eval is given")
        predictor, _ = load_knob_classifier(checkpoint_dir, task)
        inference = predictor.measure_inference_throughput(lhs_sample(task.space, 10, config.seed))
    prepare_run_dir(out_dir, force)

    orchestrator = TuningOrchestrator(
        task.workload,
        task.space,
        task.backend,
        tuner,
        predictor,
        params,
        mode="full-eval" if baseline else "knobcf",
        measure_p90=measure_p90,
        config_hash=config.config_hash,
        inference=inference,
    )
    try:
        result: TuningResult = await orchestrator.run()
    except BackendError:
        logfire.warn("Backend failure; writing partial artifacts to {out_dir}", out_dir=str(out_dir))
        write_tuning_artifacts(out_dir, orchestrator, config.config_hash)
        (out_dir / PARTIAL_MARKER).write_text("backend failure\n")
        raise

    write_tuning_artifacts(out_dir, orchestrator, config.config_hash)
    write_json(out_dir / "report.json", result.report.model_dump(mode="json"))
    write_timing(out_dir / "timing.json", orchestrator, config.config_hash)
    write_csv(
        pd.DataFrame(
            [[repr(p.cumulative_seconds), repr(p.best_total), repr(p.throughput)] for p in result.report.throughput_series],
            columns=SERIES_COLUMNS,
        ),
        out_dir / "series.csv",
        config.config_hash,
    )
    return result.report


# --- report ---

def _groups(events: Sequence[LogEvent]) -> dict[tuple[str, int], list[LogEvent]]:
    out: dict[tuple[str, int], list[LogEvent]] = {}
    for event in events:
        out.setdefault((event.phase, event.iteration), []).append(event)
    return out


def _regime_metrics(events: Sequence[LogEvent]) -> Optional[ClassificationMetrics]:
    labeled = [e for e in events if e.label and e.regime is not None]
    if not labeled:
        return None
    width = len(labeled[0].label)
    predictions = [CategoryLabel.parse(e.label) for e in labeled]
    truths = [CategoryLabel.one_hot(int(e.regime or 0), width) for e in labeled]
    return classification_metrics(predictions, truths)


def _mixture_metrics(events: Sequence[LogEvent], seed: int, tau: float) -> Optional[ClassificationMetrics]:
    """Predicted labels against labels minted from per-query mixtures of the executed latencies."""
    executed = [e for e in events if e.mode == "executed" and e.label]
    by_query: dict[str, list[LogEvent]] = {}
    for event in executed:
        by_query.setdefault(event.query_id, []).append(event)
    predictions, truths = [], []
    for query_id, rows in by_query.items():
        if len(rows) < MIN_SAMPLES:
            continue
        width = len(rows[0].label)
        mixture = fit_gmm([r.latency for r in rows], width, seed=stable_seed(seed, query_id))
        for row in rows:
            predictions.append(CategoryLabel.parse(row.label))
            truths.append(assign_label(mixture, row.latency, width, tau))
    return classification_metrics(predictions, truths) if predictions else None


def summarize_log(path: Path, seed: int = 0, tau: float = 0.2) -> dict:
    events = read_evaluation_log(path)
    groups = _groups(events)
    tune_groups = sorted((k, v) for k, v in groups.items() if k[0] == "tune")
    tune_events = [e for e in events if e.phase == "tune"]
    executed = sum(1 for e in events if e.mode == "executed")
    estimated = sum(1 for e in events if e.mode == "estimated")
    totals = [math.fsum(e.latency for e in rows) for _, rows in sorted(groups.items())]
    iteration_seconds = [math.fsum(e.latency for e in rows if e.mode == "executed") for _, rows in tune_groups]

    series = []
    elapsed = 0.0
    best = math.inf
    for key, rows in sorted(groups.items(), key=lambda kv: (kv[0][0] != "init", kv[0][1])):
        elapsed += math.fsum(e.latency for e in rows if e.mode == "executed")
        best = min(best, math.fsum(e.latency for e in rows))
        series.append({"cumulative_seconds": elapsed, "best_total": best})

    summary: dict[str, Any] = {
        "log": str(path),
        "executed": executed,
        "estimated": estimated,
        "estimated_fraction": estimated / len(tune_events) if tune_events else 0.0,
        "iterations": len(tune_groups),
        "average_iteration_time": float(np.mean(iteration_seconds)) if iteration_seconds else 0.0,
        "best_total": min(totals),
        "throughput_series": series,
    }
    regime = _regime_metrics(events)
    if regime is not None:
        summary["regime_metrics"] = regime.model_dump()
    mixture = _mixture_metrics(events, seed, tau)
    if mixture is not None:
        summary["mixture_metrics"] = mixture.model_dump()
    report_path = path.parent / "report.json"
    if report_path.is_file():
        report = TuningReport.model_validate_json(report_path.read_text())
        summary["p90_latency"] = report.p90_latency
        summary["mode"] = report.mode
        summary["average_iteration_time"] = report.average_iteration_time
    return summary


def cmd_report(
    log_paths: Sequence[Path],
    out_dir: Optional[Path] = None,
    force: bool = False,
    seed: int = 0,
    tau: float = 0.2,
) -> dict:
    """Metrics per log; with two logs, a comparison with the execution-count ratio."""
    if not log_paths:
        raise ConfigError("report needs at least one evaluation log")
    summaries = [summarize_log(Path(p), seed, tau) for p in log_paths]
    result: dict[str, Any] = {"logs": summaries}
    if len(summaries) == 2:
        first, second = summaries
        result["comparison"] = {
            "execution_ratio": first["executed"] / second["executed"] if second["executed"] else math.inf,
            "best_total_ratio": first["best_total"] / second["best_total"],
            "average_iteration_time_ratio": (
                first["average_iteration_time"] / second["average_iteration_time"]
                if second["average_iteration_time"]
                else math.inf
            ),
        }
    if out_dir is not None:
        prepare_run_dir(out_dir, force)
        write_json(out_dir / "summary.json", result)
    return result


def format_report(result: dict) -> str:
    """Plain-text comparison table."""
    header = f"{'log':<40} {'executed':>9} {'estimated':>10} {'est.frac':>9} {'avg T_i':>10} {'best':>10}"
    lines = [header, "-" * len(header)]
    for s in result["logs"]:
        lines.append(
            f"{Path(s['log']).parent.name + '/' + Path(s['log']).name:<40} {s['executed']:>9} "
            f"{s['estimated']:>10} {s['estimated_fraction']:>9.3f} {s['average_iteration_time']:>10.4f} "
            f"{s['best_total']:>10.4f}"
        )
    if "comparison" in result:
        c = result["comparison"]
        lines.append(f"execution ratio {c['execution_ratio']:.3f}, best-total ratio {c['best_total_ratio']:.3f}")
    return "\n".join(lines)


# --- simulate-spec ---

def cmd_simulate_spec(
    knob_space: Path,
    out_path: Path,
    workload: Optional[Path] = None,
    query_count: int = 10,
    seed: int = 0,
    regimes: tuple[int, int] = (2, 3),
    sensitive_per_query: int = 2,
    force: bool = False,
) -> Path:
    """Write a fresh simulator spec for ``workload``'s queries (or q001..qNNN)."""
    if out_path.exists() and not force:
        raise ConfigError(f"{out_path} already exists; pass --force to overwrite")
    space = load_knob_space(knob_space)
    query_ids = load_workload(workload).query_ids if workload else [f"q{i + 1:03d}" for i in range(query_count)]
    spec = generate_simulator_spec(space, query_ids, seed, regimes, sensitive_per_query)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(dump_simulator_spec(spec) + "\n")
    return out_path


# --- sweep ---

async def cmd_sweep(
    config: RunConfig,
    out_dir: Path,
    dimensions: Sequence[int] = SWEEP_DIMENSIONS,
    force: bool = False,
) -> dict:
    """Pretrain and tune once per output dimension n; report accuracy and best-latency spread."""
    prepare_run_dir(out_dir, force)
    entries = []
    for n in dimensions:
        variant = config.model_copy(update={"n": n})
        base = out_dir / f"n{n}"
        with logfire.span("sweep n={n}", n=n, **StageMetadata("tune", "sweep", "pipeline").to_dict(config.task_id)):
            pretrain = await cmd_pretrain([variant], base / "pretrain", force=force)
            report = await cmd_tune(variant, base / "tune", checkpoint_dir=base / "pretrain", force=force)
        entries.append(
            {
                "n": n,
                "holdout_accuracy": pretrain["holdout"]["accuracy"],
                "best_total": report.best_total,
                "executed_queries": report.executed_queries,
                "estimated_queries": report.estimated_queries,
            }
        )
    accuracies = [e["holdout_accuracy"] for e in entries]
    bests = [e["best_total"] for e in entries]
    result = {
        "config_hash": config.config_hash,
        "entries": entries,
        "accuracy_spread": max(accuracies) - min(accuracies),
        "best_total_spread": (max(bests) - min(bests)) / min(bests),
    }
    write_json(out_dir / "sweep.json", result)
    return result
