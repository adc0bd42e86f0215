"""
Query embedding - bottom-up message passing over plan graphs.

Each node's hidden vector is a leaky-rectified affine map of its own
features concatenated with the mean of its children's hidden vectors; the
root's hidden vector is the query embedding. The encoder is trained through
an importance head that predicts per-knob importance on the simplex.
"""

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import logfire
import numpy as np
from pydantic import BaseModel

from .base import StageMetadata
from .errors import InsufficientDataError, ShapeMismatchError
from .layers import (
    DenseStack,
    EarlyStopping,
    MomentumSGD,
    flatten,
    init_dense,
    leaky_relu,
    leaky_relu_grad,
    softmax,
    unflatten,
)
from .models import FEATURE_LENGTHS, LossTrace, PlanGraph, PlanNodeKind

EMBEDDING_DIM = 64
HEAD_HIDDEN = (128, 64)
CHECKPOINT_VERSION = 1

_METADATA = StageMetadata(phase="pretrain", action="embedding", component="query-embedding")


# --- Compiled plans ---

@dataclass(frozen=True)
class CompiledPlan:
    """Plan arrays laid out for one bottom-up pass."""
    order: tuple[int, ...]
    kinds: tuple[PlanNodeKind, ...]
    features: tuple[np.ndarray, ...]
    children: tuple[tuple[int, ...], ...]
    root: int


def compile_plan(plan: PlanGraph) -> CompiledPlan:
    position = {node.id: i for i, node in enumerate(plan.nodes)}
    kids = plan.children()
    return CompiledPlan(
        order=tuple(position[nid] for nid in plan.topological_order()),
        kinds=tuple(n.kind for n in plan.nodes),
        features=tuple(np.asarray(n.features, dtype=float) for n in plan.nodes),
        children=tuple(tuple(position[c] for c in kids[n.id]) for n in plan.nodes),
        root=position[plan.root],
    )


# --- Models ---

class EmbeddingModel:
    """Per-kind input transforms W_kind of shape (d, feature_length + d)."""

    def __init__(self, d: int = EMBEDDING_DIM, seed: int | None = 0):
        self.d = d
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed) if seed is not None else None
        for kind in PlanNodeKind:
            fan_in = FEATURE_LENGTHS[kind] + d
            if rng is None:
                w, b = np.zeros((d, fan_in)), np.zeros(d)
            else:
                w, b = init_dense(rng, fan_in, d)
            self.params[f"embed.{kind.value}.W"] = w
            self.params[f"embed.{kind.value}.b"] = b

    def _check(self, compiled: CompiledPlan) -> None:
        for kind, feats in zip(compiled.kinds, compiled.features):
            expected = self.params[f"embed.{kind.value}.W"].shape[1] - self.d
            if feats.shape[0] != expected:
                raise ShapeMismatchError(
                    f"{kind.value} node has {feats.shape[0]} features, model expects {expected}"
                )

    def forward(self, compiled: CompiledPlan) -> tuple[np.ndarray, list]:
        """One bottom-up pass. Returns the root hidden vector and a per-node cache."""
        self._check(compiled)
        hidden: list[np.ndarray | None] = [None] * len(compiled.kinds)
        cache: list = [None] * len(compiled.kinds)
        for i in compiled.order:
            kids = compiled.children[i]
            if kids:
                aggregate = np.mean([hidden[c] for c in kids], axis=0)
            else:
                aggregate = np.zeros(self.d)
            z_in = np.concatenate([compiled.features[i], aggregate])
            kind = compiled.kinds[i].value
            pre = self.params[f"embed.{kind}.W"] @ z_in + self.params[f"embed.{kind}.b"]
            hidden[i] = leaky_relu(pre)
            cache[i] = (z_in, pre)
        root = hidden[compiled.root]
        assert root is not None
        return root, cache

    def backward(self, compiled: CompiledPlan, cache: list, d_root: np.ndarray) -> dict[str, np.ndarray]:
        grads = {name: np.zeros_like(value) for name, value in self.params.items()}
        d_hidden = [np.zeros(self.d) for _ in compiled.kinds]
        d_hidden[compiled.root] = d_hidden[compiled.root] + d_root
        for i in reversed(compiled.order):
            z_in, pre = cache[i]
            kind = compiled.kinds[i].value
            delta = d_hidden[i] * leaky_relu_grad(pre)
            grads[f"embed.{kind}.W"] += np.outer(delta, z_in)
            grads[f"embed.{kind}.b"] += delta
            kids = compiled.children[i]
            if kids:
                d_in = self.params[f"embed.{kind}.W"].T @ delta
                d_aggregate = d_in[compiled.features[i].shape[0]:] / len(kids)
                for c in kids:
                    d_hidden[c] = d_hidden[c] + d_aggregate
        return grads


class ImportanceHead:
    """Three dense layers d -> h1 -> h2 -> |knobs| with a softmax output."""

    def __init__(
        self,
        d: int,
        knob_names: Sequence[str],
        hidden: tuple[int, int] = HEAD_HIDDEN,
        seed: int | None = 0,
    ):
        self.knob_names = list(knob_names)
        rng = np.random.default_rng(seed + 1) if seed is not None else None
        self.stack = DenseStack([d, hidden[0], hidden[1], len(self.knob_names)], prefix="head", rng=rng)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.stack.params

    def forward(self, embeddings: np.ndarray) -> tuple[np.ndarray, list]:
        logits, cache = self.stack.forward(embeddings)
        return softmax(logits), cache

    def predict(self, embedding: np.ndarray) -> np.ndarray:
        probs, _ = self.forward(embedding[None, :])
        return probs[0]


def embed(model: EmbeddingModel, plan: PlanGraph) -> np.ndarray:
    """Fixed-length query embedding of ``plan``."""
    root, _ = model.forward(compile_plan(plan))
    return root


# --- Training ---

class EmbeddingHyperparameters(BaseModel):
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 16
    max_epochs: int = 2000
    patience: int = 50
    min_delta: float = 1e-6
    seed: int = 0


def normalize_target(target: Sequence[float]) -> np.ndarray:
    """Project an importance target onto the simplex.

    Raises:
        ValueError: negative, non-finite, or all-zero scores.
    """
    t = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t < 0) or t.sum() <= 0:
        raise ValueError(f"non-simplex importance target: {t.tolist()}")
    return t / t.sum()


def embedding_loss_and_gradients(
    model: EmbeddingModel,
    head: ImportanceHead,
    plans: Sequence[CompiledPlan],
    targets: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error of head(embed(plan)) against ``targets`` and its gradients."""
    roots, caches = [], []
    for compiled in plans:
        root, cache = model.forward(compiled)
        roots.append(root)
        caches.append(cache)
    embeddings = np.vstack(roots)
    probs, head_cache = head.forward(embeddings)
    m, k = targets.shape
    diff = probs - targets
    loss = float(np.mean(diff**2))

    d_probs = 2.0 * diff / (m * k)
    d_logits = probs * (d_probs - np.sum(d_probs * probs, axis=1, keepdims=True))
    d_embeddings, grads = head.stack.backward(d_logits, head_cache)
    for compiled, cache, d_root in zip(plans, caches, d_embeddings):
        for name, g in model.backward(compiled, cache, d_root).items():
            grads[name] = grads[name] + g if name in grads else g
    return loss, grads


def train_embedding(
    model: EmbeddingModel,
    head: ImportanceHead,
    dataset: Sequence[tuple[PlanGraph, Sequence[float]]],
    hyperparameters: EmbeddingHyperparameters | None = None,
    task_id: str | None = None,
) -> LossTrace:
    """Train ``model`` and ``head`` in place against importance targets.

    Raises:
        InsufficientDataError: empty dataset.
        ValueError: a target is not on (or projectable to) the simplex.
    """
    hp = hyperparameters or EmbeddingHyperparameters()
    if not dataset:
        raise InsufficientDataError("embedding dataset is empty")
    compiled = [compile_plan(plan) for plan, _ in dataset]
    targets = np.vstack([normalize_target(t) for _, t in dataset])
    if targets.shape[1] != len(head.knob_names):
        raise ShapeMismatchError(
            f"targets have {targets.shape[1]} entries, head predicts {len(head.knob_names)}"
        )

    params = {**model.params, **head.params}
    optimizer = MomentumSGD(params, learning_rate=hp.learning_rate, momentum=hp.momentum)
    stopper = EarlyStopping(patience=hp.patience, min_delta=hp.min_delta)
    rng = np.random.default_rng(hp.seed)
    losses: list[float] = []
    stopped = False

    with logfire.span("train embedding on {samples} plans", samples=len(compiled), **_METADATA.to_dict(task_id)):
        for epoch in range(hp.max_epochs):
            order = rng.permutation(len(compiled))
            total = 0.0
            for start in range(0, len(order), hp.batch_size):
                batch = order[start : start + hp.batch_size]
                loss, grads = embedding_loss_and_gradients(
                    model, head, [compiled[i] for i in batch], targets[batch]
                )
                optimizer.step(grads)
                total += loss * len(batch)
            losses.append(total / len(order))
            if stopper.update(losses[-1]):
                stopped = True
                break
        logfire.info(
            "embedding training finished after {epochs} epochs, loss {loss:.3e}",
            epochs=len(losses),
            loss=losses[-1],
        )
    return LossTrace(losses=losses, stopped_early=stopped)


# --- Checkpoints ---

class LayerWeights(BaseModel):
    shape: tuple[int, int]
    weights: list[float]
    bias: list[float]


class EmbeddingCheckpoint(BaseModel):
    version: int = CHECKPOINT_VERSION
    d: int
    head_hidden: tuple[int, int]
    knob_names: list[str]
    kinds: dict[str, LayerWeights]
    head: list[LayerWeights]
    config_hash: str = ""


def _layer(w: np.ndarray, b: np.ndarray) -> LayerWeights:
    return LayerWeights(shape=(int(w.shape[0]), int(w.shape[1])), weights=flatten(w), bias=flatten(b))


def to_checkpoint(model: EmbeddingModel, head: ImportanceHead, config_hash: str = "") -> EmbeddingCheckpoint:
    return EmbeddingCheckpoint(
        d=model.d,
        head_hidden=(head.stack.sizes[1], head.stack.sizes[2]),
        knob_names=head.knob_names,
        kinds={
            kind.value: _layer(model.params[f"embed.{kind.value}.W"], model.params[f"embed.{kind.value}.b"])
            for kind in PlanNodeKind
        },
        head=[
            _layer(head.params[f"head.W{i}"], head.params[f"head.b{i}"]) for i in range(head.stack.depth)
        ],
        config_hash=config_hash,
    )


def from_checkpoint(checkpoint: EmbeddingCheckpoint) -> tuple[EmbeddingModel, ImportanceHead]:
    model = EmbeddingModel(d=checkpoint.d, seed=None)
    for kind, layer in checkpoint.kinds.items():
        model.params[f"embed.{kind}.W"] = unflatten(layer.weights, layer.shape)
        model.params[f"embed.{kind}.b"] = np.asarray(layer.bias, dtype=float)
    head = ImportanceHead(checkpoint.d, checkpoint.knob_names, hidden=checkpoint.head_hidden, seed=None)
    for i, layer in enumerate(checkpoint.head):
        head.params[f"head.W{i}"] = unflatten(layer.weights, layer.shape)
        head.params[f"head.b{i}"] = np.asarray(layer.bias, dtype=float)
    return model, head


def save_embedding(model: EmbeddingModel, head: ImportanceHead, path: str | Path, config_hash: str = "") -> None:
    payload = to_checkpoint(model, head, config_hash).model_dump(mode="json")
    Path(path).write_text(json.dumps(payload, indent=1))


def load_embedding(path: str | Path) -> tuple[EmbeddingModel, ImportanceHead]:
    return from_checkpoint(EmbeddingCheckpoint.model_validate_json(Path(path).read_text()))
