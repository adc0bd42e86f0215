"""
Importance oracle - per-query knob importance targets.

A bagged ensemble of depth-bounded regression trees maps knob encodings to
latency; permutation importance then measures how much the squared error
grows when one knob's encoding segment is shuffled across samples.

Scoring the training samples themselves uses each tree's out-of-bag rows only.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import logfire
import numpy as np

from .base import StageMetadata
from .errors import InsufficientDataError, ShapeMismatchError
from .models import ImportanceVector, KnobSpace

MIN_SAMPLES = 20
N_TREES = 25
MAX_DEPTH = 6
BOOTSTRAP_FRACTION = 0.8
REPEATS = 5

_METADATA = StageMetadata(phase="pretrain", action="importance", component="importance-oracle")


@dataclass
class RegressionTree:
    """Array-backed CART regression tree; feature -1 marks a leaf."""
    max_depth: int = MAX_DEPTH
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        self._grow(X, y, np.arange(len(y)), depth=0)
        return self

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _grow(self, X: np.ndarray, y: np.ndarray, idx: np.ndarray, depth: int) -> int:
        node = self._new_node(float(np.mean(y[idx])))
        if depth >= self.max_depth or len(idx) < 2:
            return node
        split = _best_split(X[idx], y[idx])
        if split is None:
            return node
        feature, threshold = split
        goes_left = X[idx, feature] <= threshold
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = self._grow(X, y, idx[goes_left], depth + 1)
        self.right[node] = self._grow(X, y, idx[~goes_left], depth + 1)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        for _ in range(self.max_depth + 1):
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        return value[node]

    @property
    def split_features(self) -> set[int]:
        return {f for f in self.feature if f >= 0}


def _best_split(X: np.ndarray, y: np.ndarray) -> tuple[int, float] | None:
    """Best (feature, threshold) by squared-error reduction, or None."""
    n = len(y)
    parent = float(np.sum((y - y.mean()) ** 2))
    best_sse = parent
    best: tuple[int, float] | None = None
    left_n = np.arange(1, n)
    right_n = n - left_n
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys**2)
        left_sum, left_sq = csum[:-1], csq[:-1]
        right_sum, right_sq = csum[-1] - left_sum, csq[-1] - left_sq
        sse = (left_sq - left_sum**2 / left_n) + (right_sq - right_sum**2 / right_n)
        sse = np.where(valid, sse, np.inf)
        j = int(np.argmin(sse))
        if sse[j] < best_sse:
            best_sse = float(sse[j])
            best = (f, float((xs[j] + xs[j + 1]) / 2.0))
    if best is None or parent - best_sse <= 1e-12 * max(1.0, parent):
        return None
    return best


class BaggedTreeRegressor:
    """Bootstrap-aggregated regression trees."""

    def __init__(
        self,
        n_trees: int = N_TREES,
        max_depth: int = MAX_DEPTH,
        bootstrap_fraction: float = BOOTSTRAP_FRACTION,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.bootstrap_fraction = bootstrap_fraction
        self.seed = seed
        self.trees: list[RegressionTree] = []
        self.oob_masks: list[np.ndarray] = []
        self.width = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BaggedTreeRegressor":
        rng = np.random.default_rng(self.seed)
        size = max(1, int(round(self.bootstrap_fraction * len(y))))
        self.width = X.shape[1]
        self.trees = []
        self.oob_masks = []
        for _ in range(self.n_trees):
            boot = rng.integers(0, len(y), size=size)
            self.trees.append(RegressionTree(max_depth=self.max_depth).fit(X[boot], y[boot]))
            oob = np.ones(len(y), dtype=bool)
            oob[boot] = False
            self.oob_masks.append(oob)
        return self

    @property
    def n_fit(self) -> int:
        return len(self.oob_masks[0]) if self.oob_masks else 0

    def oob_predict(self, X: np.ndarray) -> np.ndarray:
        """Per-row mean over the trees that did not see the row; NaN where every tree did."""
        total = np.zeros(len(X))
        count = np.zeros(len(X))
        for tree, oob in zip(self.trees, self.oob_masks):
            if oob.any():
                total[oob] += tree.predict(X[oob])
                count[oob] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(count > 0, total / np.maximum(count, 1), np.nan)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.width:
            raise ShapeMismatchError(f"regressor fit on width {self.width}, got {X.shape[1]}")
        return np.mean([tree.predict(X) for tree in self.trees], axis=0)

    @property
    def split_features(self) -> set[int]:
        out: set[int] = set()
        for tree in self.trees:
            out |= tree.split_features
        return out


def _stack(samples: Sequence[tuple[np.ndarray, float]]) -> tuple[np.ndarray, np.ndarray]:
    widths = {len(encoding) for encoding, _ in samples}
    if len(widths) > 1:
        raise ShapeMismatchError(f"inconsistent encoding widths: {sorted(widths)}")
    X = np.vstack([np.asarray(e, dtype=float) for e, _ in samples])
    y = np.asarray([latency for _, latency in samples], dtype=float)
    return X, y


def fit_regressor(samples: Sequence[tuple[np.ndarray, float]], seed: int = 0) -> BaggedTreeRegressor:
    """Fit encoding -> latency.

    Raises:
        InsufficientDataError: fewer than 20 samples.
        ShapeMismatchError: encodings of different widths.
    """
    if len(samples) < MIN_SAMPLES:
        raise InsufficientDataError(f"need >= {MIN_SAMPLES} samples, got {len(samples)}")
    X, y = _stack(samples)
    return BaggedTreeRegressor(seed=seed).fit(X, y)


def permutation_importance(
    regressor: BaggedTreeRegressor,
    samples: Sequence[tuple[np.ndarray, float]],
    space: KnobSpace,
    repeats: int = REPEATS,
    seed: int = 0,
) -> ImportanceVector:
    """Mean squared-error increase from shuffling each knob's segment, on the simplex.

    When ``samples`` are the rows the regressor was fit on, every tree is
    scored on its own out-of-bag rows; a regressor whose out-of-bag R^2 is
    not positive yields uniform importance.
    """
    X, y = _stack(samples)
    if X.shape[1] != space.width:
        raise ShapeMismatchError(f"samples have width {X.shape[1]}, space has {space.width}")
    rng = np.random.default_rng(seed)
    if len(y) == regressor.n_fit:
        raw = _out_of_bag_scores(regressor, X, y, space, repeats, rng)
        if raw is None:
            return normalize_importance(ImportanceVector(scores={spec.name: 0.0 for spec in space.knobs}))
        return normalize_importance(ImportanceVector(scores=raw))
    baseline = float(np.mean((regressor.predict(X) - y) ** 2))
    raw = {}
    for spec, segment in space.segments():
        increases = []
        for _ in range(repeats):
            perm = rng.permutation(len(y))
            shuffled = X.copy()
            shuffled[:, segment] = X[perm, segment]
            increases.append(float(np.mean((regressor.predict(shuffled) - y) ** 2)) - baseline)
        raw[spec.name] = max(0.0, float(np.mean(increases)))
    return normalize_importance(ImportanceVector(scores=raw))


def _out_of_bag_scores(
    regressor: BaggedTreeRegressor,
    X: np.ndarray,
    y: np.ndarray,
    space: KnobSpace,
    repeats: int,
    rng: np.random.Generator,
) -> dict[str, float] | None:
    predicted = regressor.oob_predict(X)
    covered = ~np.isnan(predicted)
    variance = float(np.var(y[covered])) if covered.any() else 0.0
    if variance <= 1e-12:
        return None
    r2 = 1.0 - float(np.mean((predicted[covered] - y[covered]) ** 2)) / variance
    if r2 <= 0.0:
        logfire.debug("out-of-bag r2 {r2:.3f} not positive, importance is uniform", r2=r2)
        return None
    raw: dict[str, float] = {}
    for spec, segment in space.segments():
        increases = []
        for tree, oob in zip(regressor.trees, regressor.oob_masks):
            rows = np.flatnonzero(oob)
            if len(rows) < 2:
                continue
            X_oob, y_oob = X[rows], y[rows]
            base = float(np.mean((tree.predict(X_oob) - y_oob) ** 2))
            for _ in range(repeats):
                shuffled = X_oob.copy()
                shuffled[:, segment] = X_oob[rng.permutation(len(rows))][:, segment]
                increases.append(float(np.mean((tree.predict(shuffled) - y_oob) ** 2)) - base)
        raw[spec.name] = max(0.0, float(np.mean(increases))) if increases else 0.0
    return raw


def normalize_importance(vector: ImportanceVector) -> ImportanceVector:
    """Scale scores onto the simplex; all-zero scores become uniform."""
    total = sum(vector.scores.values())
    if total <= 0:
        uniform = 1.0 / max(len(vector.scores), 1)
        return ImportanceVector(scores={k: uniform for k in vector.scores}, normalized=True)
    return ImportanceVector(scores={k: v / total for k, v in vector.scores.items()}, normalized=True)


def query_importance(
    space: KnobSpace,
    samples: Sequence[tuple[np.ndarray, float]],
    seed: int = 0,
    query_id: str = "",
    task_id: str | None = None,
) -> ImportanceVector:
    """Fit the oracle on one query's samples and score every knob."""
    with logfire.span("knob importance for {query_id}", query_id=query_id, **_METADATA.to_dict(task_id)):
        regressor = fit_regressor(samples, seed=seed)
        return permutation_importance(regressor, samples, space, seed=seed)
