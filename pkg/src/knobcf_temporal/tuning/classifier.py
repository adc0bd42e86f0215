"""
Knob classifier - the multi-label category network and its judge/estimate rules.

Input is ``[query embedding ; knob encoding]``; output is one logistic unit
per label bit, trained with summed per-bit binary cross-entropy.
"""

import copy
import json
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import logfire
import numpy as np
from pydantic import BaseModel, Field

from .base import StageMetadata
from .embedding import EmbeddingModel, LayerWeights, compile_plan
from .errors import (
    IncompatibleCheckpointError,
    InsufficientDataError,
    JudgeError,
    ShapeMismatchError,
)
from .gmm import MIN_SAMPLES, TAU, label_dataset
from .knobs import encode_configuration
from .layers import DenseStack, EarlyStopping, MomentumSGD, flatten, sigmoid, unflatten
from .models import (
    CategoryLabel,
    InferenceThroughput,
    KnobConfiguration,
    KnobSpace,
    LossTrace,
    Workload,
)
from .store import LabelStore

HIDDEN = (256, 64)
THRESHOLD = 0.5
M_MIN = 2
CHECKPOINT_VERSION = 1
FINETUNE_MAX_EPOCHS = 200

_METADATA = StageMetadata(phase="pretrain", action="classifier", component="knob-classifier")
_FINETUNE_METADATA = StageMetadata(phase="finetune", action="classifier", component="knob-classifier")


# --- Model ---

class ClassifierModel:
    """Dense (d + width) -> 256 -> 64 -> n with logistic outputs."""

    def __init__(
        self,
        d: int,
        encoding_width: int,
        n: int,
        hidden: tuple[int, int] = HIDDEN,
        seed: int | None = 0,
    ):
        self.d = d
        self.encoding_width = encoding_width
        self.n = n
        rng = np.random.default_rng(seed) if seed is not None else None
        self.stack = DenseStack([d + encoding_width, hidden[0], hidden[1], n], prefix="clf", rng=rng)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.stack.params

    @property
    def hidden(self) -> tuple[int, int]:
        return (self.stack.sizes[1], self.stack.sizes[2])

    def _check_inputs(self, inputs: np.ndarray) -> None:
        if inputs.ndim != 2 or inputs.shape[1] != self.d + self.encoding_width:
            raise ShapeMismatchError(
                f"classifier expects inputs of width {self.d + self.encoding_width}, got {inputs.shape}"
            )

    def predict_proba(self, inputs: np.ndarray) -> np.ndarray:
        self._check_inputs(inputs)
        logits, _ = self.stack.forward(inputs)
        return sigmoid(logits)

    def loss_and_gradients(self, inputs: np.ndarray, labels: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Per-bit binary cross-entropy summed over bits, averaged over rows."""
        self._check_inputs(inputs)
        if labels.shape != (inputs.shape[0], self.n):
            raise ShapeMismatchError(f"labels {labels.shape} do not match ({inputs.shape[0]}, {self.n})")
        logits, cache = self.stack.forward(inputs)
        m = inputs.shape[0]
        loss = float(np.sum(np.logaddexp(0.0, logits) - labels * logits) / m)
        _, grads = self.stack.backward((sigmoid(logits) - labels) / m, cache)
        return loss, grads


# --- Training data ---

@dataclass
class TrainingSet:
    """Aligned rows of (embedding, encoding, label bits)."""
    embeddings: np.ndarray
    encodings: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[np.ndarray, np.ndarray, CategoryLabel]]) -> "TrainingSet":
        if not rows:
            raise InsufficientDataError("training set is empty")
        shapes = {(len(e), len(k), label.width) for e, k, label in rows}
        if len(shapes) > 1:
            raise ShapeMismatchError(f"inconsistent (d, encoding width, n) across rows: {sorted(shapes)}")
        return cls(
            embeddings=np.vstack([np.asarray(e, dtype=float) for e, _, _ in rows]),
            encodings=np.vstack([np.asarray(k, dtype=float) for _, k, _ in rows]),
            labels=np.array([label.bits for _, _, label in rows], dtype=float),
        )

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        return np.hstack([self.embeddings, self.encodings])

    def subset(self, indices: np.ndarray) -> "TrainingSet":
        return TrainingSet(self.embeddings[indices], self.encodings[indices], self.labels[indices])

    def split(self, holdout: float = 0.2, seed: int = 0) -> tuple["TrainingSet", "TrainingSet"]:
        """Seeded (train, holdout) partition."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(holdout * len(self)))
        return self.subset(np.sort(order[cut:])), self.subset(np.sort(order[:cut]))

    def truths(self) -> list[CategoryLabel]:
        return [CategoryLabel(bits=tuple(int(b) for b in row)) for row in self.labels]


class ClassifierHyperparameters(BaseModel):
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 50
    min_delta: float = 1e-6
    seed: int = 0


def train(
    model: ClassifierModel,
    training_set: TrainingSet,
    hyperparameters: ClassifierHyperparameters | None = None,
    task_id: str | None = None,
) -> LossTrace:
    """Seeded mini-batch momentum SGD on ``model`` in place.

    Raises:
        InsufficientDataError: empty set.
        ShapeMismatchError: set dimensions disagree with the model.
    """
    hp = hyperparameters or ClassifierHyperparameters()
    if len(training_set) == 0:
        raise InsufficientDataError("training set is empty")
    inputs, labels = training_set.inputs, training_set.labels
    model._check_inputs(inputs)
    if labels.shape[1] != model.n:
        raise ShapeMismatchError(f"labels have {labels.shape[1]} bits, model predicts {model.n}")

    optimizer = MomentumSGD(model.params, learning_rate=hp.learning_rate, momentum=hp.momentum)
    stopper = EarlyStopping(patience=hp.patience, min_delta=hp.min_delta)
    rng = np.random.default_rng(hp.seed)
    losses: list[float] = []
    stopped = False

    with logfire.span("train classifier on {rows} rows", rows=len(training_set), **_METADATA.to_dict(task_id)):
        for _ in range(hp.max_epochs):
            order = rng.permutation(len(training_set))
            total = 0.0
            for start in range(0, len(order), hp.batch_size):
                batch = order[start : start + hp.batch_size]
                loss, grads = model.loss_and_gradients(inputs[batch], labels[batch])
                optimizer.step(grads)
                total += loss * len(batch)
            losses.append(total / len(order))
            if stopper.update(losses[-1]):
                stopped = True
                break
        logfire.info(
            "classifier training finished after {epochs} epochs, loss {loss:.3e}",
            epochs=len(losses),
            loss=losses[-1],
        )
    return LossTrace(losses=losses, stopped_early=stopped)


def finetune(
    model: ClassifierModel,
    recent: TrainingSet,
    hyperparameters: ClassifierHyperparameters | None = None,
    task_id: str | None = None,
) -> ClassifierModel:
    """Continue training a copy of ``model`` on ``recent`` at a tenth of the learning rate."""
    hp = hyperparameters or ClassifierHyperparameters()
    if len(recent) == 0:
        raise InsufficientDataError("fine-tuning set is empty")
    tuned = copy.deepcopy(model)
    slow = hp.model_copy(
        update={
            "learning_rate": hp.learning_rate / 10.0,
            "max_epochs": min(hp.max_epochs, FINETUNE_MAX_EPOCHS),
        }
    )
    with logfire.span("finetune classifier on {rows} rows", rows=len(recent), **_FINETUNE_METADATA.to_dict(task_id)):
        train(tuned, recent, slow, task_id=task_id)
    return tuned


# --- Prediction ---

def label_from_probabilities(probabilities: Sequence[float]) -> CategoryLabel:
    """Threshold at 0.5; an all-low output keeps its argmax bit."""
    p = np.asarray(probabilities, dtype=float)
    bits = (p >= THRESHOLD).astype(int)
    if not bits.any():
        bits[int(np.argmax(p))] = 1
    return CategoryLabel(bits=tuple(int(b) for b in bits))


def predict(model: ClassifierModel, embedding: np.ndarray, encoding: np.ndarray) -> CategoryLabel:
    inputs = np.concatenate([np.asarray(embedding, dtype=float), np.asarray(encoding, dtype=float)])[None, :]
    return label_from_probabilities(model.predict_proba(inputs)[0])


def predict_many(model: ClassifierModel, training_set: TrainingSet) -> list[CategoryLabel]:
    return [label_from_probabilities(row) for row in model.predict_proba(training_set.inputs)]


def judge(
    label: CategoryLabel,
    store: LabelStore,
    query_id: str,
    m_min: int = M_MIN,
    task_id: str | None = None,
) -> bool:
    """True iff the store holds at least ``m_min`` executions for (query, label)."""
    if task_id is not None:
        store.require_task(task_id)
    return store.count(query_id, label) >= m_min


def estimate(
    label: CategoryLabel,
    store: LabelStore,
    query_id: str,
    m_min: int = M_MIN,
    task_id: str | None = None,
) -> float:
    """Mean stored latency for (query, label).

    Raises:
        JudgeError: the history is too thin for ``judge`` to pass.
    """
    if not judge(label, store, query_id, m_min, task_id):
        raise JudgeError(
            f"only {store.count(query_id, label)} records for ({query_id}, {label}); need {m_min}"
        )
    return store.mean(query_id, label)


# --- Metrics ---

class ClassificationMetrics(BaseModel):
    accuracy: float
    precision: float
    recall: float
    tp: int
    tn: int
    fp: int
    fn: int
    precision_undefined: bool = False
    recall_undefined: bool = False


def classification_metrics(
    predictions: Sequence[CategoryLabel], truths: Sequence[CategoryLabel]
) -> ClassificationMetrics:
    """Micro-averaged per-bit accuracy, precision and recall.

    Zero-denominator ratios are reported as 1.0 and flagged.
    """
    if len(predictions) != len(truths):
        raise ShapeMismatchError(f"{len(predictions)} predictions vs {len(truths)} truths")
    tp = tn = fp = fn = 0
    for predicted, truth in zip(predictions, truths):
        if predicted.width != truth.width:
            raise ShapeMismatchError(f"label widths differ: {predicted.width} vs {truth.width}")
        for p, t in zip(predicted.bits, truth.bits):
            tp += int(p == 1 and t == 1)
            tn += int(p == 0 and t == 0)
            fp += int(p == 1 and t == 0)
            fn += int(p == 0 and t == 1)
    total = tp + tn + fp + fn
    return ClassificationMetrics(
        accuracy=(tp + tn) / total if total else 1.0,
        precision=tp / (tp + fp) if tp + fp else 1.0,
        recall=tp / (tp + fn) if tp + fn else 1.0,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        precision_undefined=tp + fp == 0,
        recall_undefined=tp + fn == 0,
    )


# --- Checkpoints ---

class Provenance(BaseModel):
    pretrain_tasks: list[str] = Field(default_factory=list)
    finetune_task: str | None = None


class ClassifierCheckpoint(BaseModel):
    version: int = CHECKPOINT_VERSION
    n: int
    d: int
    encoding_width: int
    hidden: tuple[int, int]
    space: KnobSpace
    layers: list[LayerWeights]
    provenance: Provenance = Field(default_factory=Provenance)
    config_hash: str = ""


def to_checkpoint(
    model: ClassifierModel,
    space: KnobSpace,
    provenance: Provenance | None = None,
    config_hash: str = "",
) -> ClassifierCheckpoint:
    if space.width != model.encoding_width:
        raise ShapeMismatchError(f"space width {space.width} != model encoding width {model.encoding_width}")
    return ClassifierCheckpoint(
        n=model.n,
        d=model.d,
        encoding_width=model.encoding_width,
        hidden=model.hidden,
        space=space,
        layers=[
            LayerWeights(
                shape=tuple(model.params[f"clf.W{i}"].shape),
                weights=flatten(model.params[f"clf.W{i}"]),
                bias=flatten(model.params[f"clf.b{i}"]),
            )
            for i in range(model.stack.depth)
        ],
        provenance=provenance or Provenance(),
        config_hash=config_hash,
    )


def from_checkpoint(checkpoint: ClassifierCheckpoint) -> ClassifierModel:
    model = ClassifierModel(checkpoint.d, checkpoint.encoding_width, checkpoint.n, checkpoint.hidden, seed=None)
    for i, layer in enumerate(checkpoint.layers):
        model.params[f"clf.W{i}"] = unflatten(layer.weights, layer.shape)
        model.params[f"clf.b{i}"] = np.asarray(layer.bias, dtype=float)
    return model


def save_classifier(checkpoint: ClassifierCheckpoint, path: str | Path) -> None:
    Path(path).write_text(json.dumps(checkpoint.model_dump(mode="json"), indent=1))


def load_classifier(path: str | Path) -> ClassifierCheckpoint:
    return ClassifierCheckpoint.model_validate_json(Path(path).read_text())


def check_compatible(checkpoint: ClassifierCheckpoint, d: int, task_space: KnobSpace, n: int | None = None) -> None:
    """Raise IncompatibleCheckpointError naming the first mismatched dimension."""
    if checkpoint.d != d:
        raise IncompatibleCheckpointError(f"embedding dimension d: classifier {checkpoint.d}, embedding {d}")
    if checkpoint.space.width != checkpoint.encoding_width:
        raise IncompatibleCheckpointError(
            f"encoding width: classifier {checkpoint.encoding_width}, stored space {checkpoint.space.width}"
        )
    for spec in task_space.knobs:
        known = next((k for k in checkpoint.space.knobs if k.name == spec.name), None)
        if known is None or known != spec:
            raise IncompatibleCheckpointError(f"encoding width: knob {spec.name!r} is not in the pretrained space")
    if n is not None and checkpoint.n != n:
        raise IncompatibleCheckpointError(f"output dimension n: classifier {checkpoint.n}, run config {n}")


# --- Facade ---

class KnobClassifier:
    """Pretrained classifier bound to one workload.

    Embeds every query once and reuses the embedding across configurations.
    """

    def __init__(
        self,
        space: KnobSpace,
        workload: Workload,
        embedding_model: EmbeddingModel,
        model: ClassifierModel,
        task_id: str = "task",
        hyperparameters: ClassifierHyperparameters | None = None,
        tau: float = TAU,
    ):
        if space.width != model.encoding_width:
            raise IncompatibleCheckpointError(
                f"encoding width: space {space.width}, classifier {model.encoding_width}"
            )
        if embedding_model.d != model.d:
            raise IncompatibleCheckpointError(f"embedding dimension d: {embedding_model.d} vs {model.d}")
        self.space = space
        self.workload = workload
        self.embedding_model = embedding_model
        self.model = model
        self.task_id = task_id
        self.hyperparameters = hyperparameters or ClassifierHyperparameters()
        self.tau = tau
        self._embeddings: dict[str, np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.model.n

    def embedding(self, query_id: str) -> np.ndarray:
        cached = self._embeddings.get(query_id)
        if cached is None:
            cached, _ = self.embedding_model.forward(compile_plan(self.workload.plan(query_id)))
            self._embeddings[query_id] = cached
        return cached

    def predict_label(self, query_id: str, config: KnobConfiguration) -> CategoryLabel:
        return predict(self.model, self.embedding(query_id), encode_configuration(self.space, config))

    def adapt(
        self,
        observations: Sequence[tuple[str, str, float]],
        configs: Mapping[str, KnobConfiguration],
        seed: int = 0,
    ) -> bool:
        """Fine-tune on ``(query_id, config_id, latency)`` executions labeled by fresh per-query mixtures.

        Returns False (and keeps the pretrained model) when some query has
        fewer than the mixture-fit minimum of samples.
        """
        samples: dict[str, list[tuple[str, float]]] = {}
        for query_id, config_id, latency in observations:
            samples.setdefault(query_id, []).append((config_id, latency))
        thin = sorted(q for q, obs in samples.items() if len(obs) < MIN_SAMPLES)
        if not samples or thin:
            logfire.warn("Skipping fine-tuning: too few samples for {queries}", queries=thin or "all queries")
            return False
        labeled = label_dataset(samples, self.n, seed=seed, tau=self.tau, task_id=self.task_id)
        recent = TrainingSet.from_rows(
            [
                (
                    self.embedding(r.query_id),
                    encode_configuration(self.space, configs[r.config_id]),
                    r.label,
                )
                for r in labeled.records
            ]
        )
        self.model = finetune(self.model, recent, self.hyperparameters, task_id=self.task_id)
        return True

    def measure_inference_throughput(self, configs: Sequence[KnobConfiguration], rounds: int = 3) -> InferenceThroughput:
        """Queries per second of embedding inference and of category inference, timed separately."""
        compiled = [compile_plan(q.plan) for q in self.workload.queries]
        start = time.perf_counter()
        for _ in range(rounds):
            for plan in compiled:
                self.embedding_model.forward(plan)
        embed_seconds = time.perf_counter() - start

        encodings = [encode_configuration(self.space, c) for c in configs]
        pairs = [(self.embedding(q), e) for q in self.workload.query_ids for e in encodings]
        start = time.perf_counter()
        for _ in range(rounds):
            for embedding, encoding in pairs:
                predict(self.model, embedding, encoding)
        category_seconds = time.perf_counter() - start

        return InferenceThroughput(
            embedding_qps=rounds * len(compiled) / max(embed_seconds, 1e-12),
            category_qps=rounds * len(pairs) / max(category_seconds, 1e-12),
        )
