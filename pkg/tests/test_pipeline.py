import json
from pathlib import Path

import pytest

from knobcf_temporal.config.run_config import RunConfig
from knobcf_temporal.tuning import pipeline
from knobcf_temporal.tuning.backends import EvaluationBackend, dump_simulator_spec, generate_simulator_spec
from knobcf_temporal.tuning.classifier import ClassifierHyperparameters
from knobcf_temporal.tuning.embedding import EmbeddingHyperparameters
from knobcf_temporal.tuning.errors import BackendError, ConfigError, IncompatibleCheckpointError, LogFormatError
from knobcf_temporal.tuning.pipeline import (
    PARTIAL_MARKER,
    cmd_finetune,
    cmd_pretrain,
    cmd_report,
    cmd_simulate_spec,
    cmd_sweep,
    cmd_tune,
    format_report,
    load_task,
    read_evaluation_log,
)

SMALL_EMBEDDING = EmbeddingHyperparameters(max_epochs=30, patience=10)
SMALL_CLASSIFIER = ClassifierHyperparameters(max_epochs=30, patience=10, learning_rate=1e-2)
SUITE = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def config(task_config: Path) -> RunConfig:
    return RunConfig.load(task_config)


async def _pretrain(config: RunConfig, out: Path) -> dict:
    return await cmd_pretrain([config], out, embedding_hp=SMALL_EMBEDDING, classifier_hp=SMALL_CLASSIFIER)


async def test_pretrain_writes_checkpoints(config, tmp_path):
    report = await _pretrain(config, tmp_path / "pretrain")
    out = tmp_path / "pretrain"
    for name in ("embedding.json", "classifier.json", "training_set.json", "pretrain_report.json"):
        assert (out / name).is_file()
    assert report["n"] == 4
    assert report["rows"] == 40 * 3
    assert set(report["importance"]["fixture"]) == {"q001", "q002", "q003"}
    for scores in report["importance"]["fixture"].values():
        assert set(scores) == {"buffer_mb", "cost", "mode"}
    assert 0.0 <= report["holdout"]["accuracy"] <= 1.0


async def test_pretrain_is_deterministic(config, tmp_path):
    await _pretrain(config, tmp_path / "a")
    await _pretrain(config, tmp_path / "b")
    for name in ("embedding.json", "classifier.json", "training_set.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


async def test_pretrain_rejects_mixed_output_dimensions(config, tmp_path):
    with pytest.raises(ConfigError, match="output dimension n"):
        await cmd_pretrain([config, config.model_copy(update={"n": 5})], tmp_path / "p")
    with pytest.raises(ConfigError):
        await cmd_pretrain([], tmp_path / "p")


async def test_run_directory_needs_force(config, tmp_path):
    out = tmp_path / "full"
    await cmd_tune(config, out, baseline=True, measure_p90=False)
    with pytest.raises(ConfigError, match="already exists"):
        await cmd_tune(config, out, baseline=True, measure_p90=False)
    await cmd_tune(config, out, baseline=True, force=True, measure_p90=False)


def test_output_dimension_must_cover_every_regime(config, tmp_path, space, workload):
    spec = generate_simulator_spec(space, workload.query_ids, seed=5, regimes=(3, 3))
    path = tmp_path / "three_regimes.json"
    path.write_text(dump_simulator_spec(spec))
    narrow = config.model_copy(update={"n": 2, "backend": config.backend.model_copy(update={"simulator": path})})
    with pytest.raises(ConfigError, match="3 regimes but output dimension n is 2"):
        load_task(narrow)
    assert load_task(narrow.model_copy(update={"n": 3})).backend is not None


class FailsOnce(EvaluationBackend):
    """Raises on the ``fail_at``-th evaluation of its first run only."""

    failed = False

    def __init__(self, inner: EvaluationBackend, fail_at: int):
        self.inner = inner
        self.fail_at = fail_at
        self.calls = 0

    async def evaluate(self, config, query_id, repeat=0):
        self.calls += 1
        if not FailsOnce.failed and self.calls == self.fail_at:
            FailsOnce.failed = True
            raise BackendError(f"harness lost connection on {query_id}")
        return await self.inner.evaluate(config, query_id, repeat)


async def test_retry_after_backend_failure_reuses_the_run_directory(config, tmp_path, monkeypatch):
    real_build = pipeline.build_backend
    monkeypatch.setattr(FailsOnce, "failed", False)
    monkeypatch.setattr(pipeline, "build_backend", lambda *args: FailsOnce(real_build(*args), fail_at=40))
    out = tmp_path / "full"

    with pytest.raises(BackendError):
        await cmd_tune(config, out, baseline=True, measure_p90=False)
    assert (out / PARTIAL_MARKER).is_file()
    assert (out / "evaluation_log.csv").is_file()

    report = await cmd_tune(config, out, baseline=True, measure_p90=False)
    assert report.executed_queries == config.iterations * 3
    assert not (out / PARTIAL_MARKER).exists()
    assert json.loads((out / "report.json").read_text())["mode"] == "full-eval"


async def test_baseline_artifacts(config, tmp_path):
    out = tmp_path / "full"
    report = await cmd_tune(config, out, baseline=True)
    assert report.mode == "full-eval"
    assert report.estimated_queries == 0
    assert report.executed_queries == config.iterations * 3
    assert report.p90_latency is not None
    for name in ("evaluation_log.csv", "label_store.csv", "series.csv"):
        assert (out / name).read_text().startswith(f"# config_hash={config.config_hash}\n")
    dataset = json.loads((out / "dataset.json").read_text())
    assert len(dataset["rows"]) == config.init_count + config.iterations
    assert all(row["skipped"] == 0 for row in dataset["rows"])
    events = read_evaluation_log(out / "evaluation_log.csv")
    assert all(e.mode == "executed" and e.label == "" for e in events)


async def test_tune_needs_checkpoints(config, tmp_path):
    with pytest.raises(ConfigError, match="checkpoints"):
        await cmd_tune(config, tmp_path / "knobcf")


async def test_tune_with_checkpoints(config, tmp_path):
    await _pretrain(config, tmp_path / "pretrain")
    report = await cmd_tune(config, tmp_path / "knobcf", checkpoint_dir=tmp_path / "pretrain", measure_p90=False)
    assert report.mode == "knobcf"
    assert report.executed_queries + report.estimated_queries == config.iterations * 3
    assert report.inference is not None
    events = read_evaluation_log(tmp_path / "knobcf" / "evaluation_log.csv")
    assert all(len(e.label) == 4 for e in events)
    assert len(events) == (config.init_count + config.iterations) * 3


async def test_tune_is_deterministic(config, tmp_path):
    await _pretrain(config, tmp_path / "pretrain")
    for name in ("a", "b"):
        await cmd_tune(config, tmp_path / name, checkpoint_dir=tmp_path / "pretrain", measure_p90=False)
    for name in ("evaluation_log.csv", "label_store.csv", "dataset.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


async def test_baseline_report_is_byte_identical_across_runs(config, tmp_path):
    for name in ("a", "b"):
        await cmd_tune(config, tmp_path / name, baseline=True)
    for name in ("report.json", "series.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    rows = json.loads((tmp_path / "a" / "dataset.json").read_text())["rows"]
    assert report["iteration_times"] == [row["executed_seconds"] for row in rows if row["phase"] == "tune"]
    timing = json.loads((tmp_path / "a" / "timing.json").read_text())
    assert len(timing["judge_overhead_seconds"]) == config.iterations
    assert all(t >= e for t, e in zip(timing["iteration_seconds_with_overhead"], report["iteration_times"]))


async def test_incompatible_output_dimension(config, tmp_path):
    await _pretrain(config, tmp_path / "pretrain")
    wider = config.model_copy(update={"n": 5})
    with pytest.raises(IncompatibleCheckpointError, match="output dimension n"):
        await cmd_tune(wider, tmp_path / "knobcf", checkpoint_dir=tmp_path / "pretrain")
    assert not (tmp_path / "knobcf").exists()


async def test_finetune_tags_the_task(config, tmp_path):
    await _pretrain(config, tmp_path / "pretrain")
    summary = await cmd_finetune(config, tmp_path / "pretrain", tmp_path / "ft")
    assert summary["configurations"] == config.init_count + config.finetune_iterations
    checkpoint = json.loads((tmp_path / "ft" / "classifier.json").read_text())
    expected = "fixture" if summary["adapted"] else None
    assert checkpoint["provenance"]["finetune_task"] == expected
    assert (tmp_path / "ft" / "embedding.json").read_bytes() == (tmp_path / "pretrain" / "embedding.json").read_bytes()


async def test_report_compares_two_logs(config, tmp_path):
    await _pretrain(config, tmp_path / "pretrain")
    await cmd_tune(config, tmp_path / "knobcf", checkpoint_dir=tmp_path / "pretrain", measure_p90=False)
    await cmd_tune(config, tmp_path / "full", baseline=True, measure_p90=False)
    result = cmd_report(
        [tmp_path / "knobcf" / "evaluation_log.csv", tmp_path / "full" / "evaluation_log.csv"],
        tmp_path / "report",
    )
    knobcf, full = result["logs"]
    assert full["estimated_fraction"] == 0.0
    assert full["mode"] == "full-eval"
    assert knobcf["iterations"] == full["iterations"] == config.iterations
    assert "regime_metrics" in knobcf
    assert result["comparison"]["execution_ratio"] <= 1.0
    assert (tmp_path / "report" / "summary.json").is_file()
    assert "execution ratio" in format_report(result)


def test_report_rejects_bad_logs(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# config_hash=abc\niteration,phase,config_id,query_id,mode,latency,label,regime\n")
    with pytest.raises(LogFormatError, match="no rows"):
        cmd_report([empty])

    bad = tmp_path / "bad.csv"
    bad.write_text(
        "# config_hash=abc\n"
        "iteration,phase,config_id,query_id,mode,latency,label,regime\n"
        "0,init,c1,q001,executed,1.5,,\n"
        "1,tune,c2,q001,guessed,1.2,,\n"
    )
    with pytest.raises(LogFormatError, match="line 4"):
        cmd_report([bad])

    with pytest.raises(ConfigError):
        cmd_report([])


def test_simulate_spec(tmp_path, task_config):
    data = task_config.parent / "data"
    out = tmp_path / "sim.json"
    cmd_simulate_spec(data / "knobs.json", out, workload=data / "workload.json", seed=2)
    spec = json.loads(out.read_text())
    assert [q["id"] for q in spec["queries"]] == ["q001", "q002", "q003"]
    with pytest.raises(ConfigError):
        cmd_simulate_spec(data / "knobs.json", out)

    cmd_simulate_spec(data / "knobs.json", out, query_count=4, force=True)
    assert len(json.loads(out.read_text())["queries"]) == 4


@pytest.mark.slow
async def test_sweep_over_output_dimensions(config, tmp_path):
    result = await cmd_sweep(config, tmp_path / "sweep", dimensions=(4, 6))
    assert [e["n"] for e in result["entries"]] == [4, 6]
    assert result["accuracy_spread"] >= 0.0
    assert result["best_total_spread"] >= 0.0
    assert (tmp_path / "sweep" / "n6" / "tune" / "report.json").is_file()


@pytest.mark.slow
async def test_standard_suite_saves_executions_and_keeps_the_best(tmp_path):
    history = RunConfig.load(SUITE / "history.json")
    task = RunConfig.load(SUITE / "task.json")

    pretrain = await cmd_pretrain([history], tmp_path / "pretrain")
    assert pretrain["holdout"]["accuracy"] >= 0.85
    assert pretrain["holdout"]["recall"] >= 0.70

    knobcf = await cmd_tune(task, tmp_path / "knobcf", checkpoint_dir=tmp_path / "pretrain", measure_p90=False)
    full = await cmd_tune(task, tmp_path / "full", baseline=True, measure_p90=False)
    assert knobcf.executed_queries <= 0.7 * full.executed_queries
    assert abs(knobcf.best_total - full.best_total) <= 0.05 * full.best_total


@pytest.mark.slow
async def test_standard_suite_is_robust_to_the_output_dimension(tmp_path):
    result = await cmd_sweep(RunConfig.load(SUITE / "task.json"), tmp_path / "sweep")
    assert [e["n"] for e in result["entries"]] == [8, 10, 12, 14, 16]
    assert result["accuracy_spread"] <= 0.05
    assert result["best_total_spread"] <= 0.05
