"""
Dense layers, activations and the momentum optimizer shared by the
embedding model, the importance head and the knob classifier.

Parameters live in flat ``dict[str, np.ndarray]`` maps so gradients, optimizer
state and checkpoints all use the same keys.
"""

from dataclasses import dataclass, field

import numpy as np

LEAKY_SLOPE = 0.01


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_dense(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    bias = rng.uniform(-bound, bound, size=fan_out)
    return weight, bias


class DenseStack:
    """Fully connected layers with leaky-rectifier activations between them.

    The final layer is linear; callers apply their own output transform
    (softmax for the importance head, logistic for the classifier).
    """

    def __init__(self, sizes: list[int], prefix: str, rng: np.random.Generator | None = None):
        self.sizes = list(sizes)
        self.prefix = prefix
        self.params: dict[str, np.ndarray] = {}
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if rng is None:
                w, b = np.zeros((fan_out, fan_in)), np.zeros(fan_out)
            else:
                w, b = init_dense(rng, fan_in, fan_out)
            self.params[f"{prefix}.W{i}"] = w
            self.params[f"{prefix}.b{i}"] = b

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
        """Forward a batch ``x`` of shape (m, sizes[0]).

        Returns the output logits and a cache of (input, pre-activation) per layer.
        """
        cache = []
        h = x
        for i in range(self.depth):
            z = h @ self.params[f"{self.prefix}.W{i}"].T + self.params[f"{self.prefix}.b{i}"]
            cache.append((h, z))
            h = leaky_relu(z) if i < self.depth - 1 else z
        return h, cache

    def backward(
        self, d_out: np.ndarray, cache: list[tuple[np.ndarray, np.ndarray]]
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Backpropagate ``d_out`` (gradient w.r.t. the output logits).

        Returns the gradient w.r.t. the input and parameter gradients.
        """
        grads: dict[str, np.ndarray] = {}
        delta = d_out
        for i in reversed(range(self.depth)):
            h, z = cache[i]
            if i < self.depth - 1:
                delta = delta * leaky_relu_grad(z)
            grads[f"{self.prefix}.W{i}"] = delta.T @ h
            grads[f"{self.prefix}.b{i}"] = delta.sum(axis=0)
            delta = delta @ self.params[f"{self.prefix}.W{i}"]
        return delta, grads


@dataclass
class MomentumSGD:
    """Stochastic gradient descent with classical momentum."""
    params: dict[str, np.ndarray]
    learning_rate: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(grad)
            v = self.momentum * v - self.learning_rate * grad
            self.velocity[name] = v
            self.params[name] += v


@dataclass
class EarlyStopping:
    """Stops when the best loss improved by less than ``min_delta`` over ``patience`` epochs."""
    patience: int = 50
    min_delta: float = 1e-6
    history: list[float] = field(default_factory=list)

    def update(self, loss: float) -> bool:
        """Record ``loss``; return True when training should stop."""
        self.history.append(loss)
        if len(self.history) <= self.patience:
            return False
        before = min(self.history[: -self.patience])
        recent = min(self.history[-self.patience:])
        return before - recent < self.min_delta


def flatten(array: np.ndarray) -> list[float]:
    """Row-major flat list for checkpoints."""
    return [float(v) for v in np.asarray(array, dtype=float).ravel(order="C")]


def unflatten(values: list[float], shape: tuple[int, ...]) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(shape, order="C")
