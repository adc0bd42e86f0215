"""
Tuners - knob-configuration recommenders behind one contract.

Latin hypercube sampling seeds the search; a Gaussian-process Bayesian
optimizer (expected improvement) and uniform random search recommend the
configurations that follow.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import logfire
import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import norm

from .errors import ConfigError, InsufficientDataError
from .knobs import encode_configuration, encode_many
from .models import KnobConfiguration, KnobKind, KnobSpace

LENGTH_SCALES = (0.1, 0.3, 1.0, 3.0)
SIGNAL_VARIANCES = (0.5, 1.0, 2.0)
JITTER = 1e-6
CANDIDATE_COUNT = 1000


# --- Sampling ---

def _draw_level(rng: np.random.Generator, levels: tuple[str, ...], size: int) -> list[str]:
    return [levels[int(i)] for i in rng.integers(0, len(levels), size=size)]


def lhs_sample(space: KnobSpace, count: int, seed: int = 0) -> list[KnobConfiguration]:
    """Latin hypercube: one sample per equal-width stratum on every numeric knob."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    columns: dict[str, list[float | str]] = {}
    for spec in space.knobs:
        if spec.kind is KnobKind.NUMERIC:
            assert spec.min is not None and spec.max is not None
            strata = rng.permutation(count)
            u = (strata + rng.uniform(0.0, 1.0, size=count)) / count
            columns[spec.name] = [float(spec.min + v * (spec.max - spec.min)) for v in u]
        else:
            columns[spec.name] = list(_draw_level(rng, spec.levels, count))
    return [KnobConfiguration(values={name: columns[name][i] for name in space.names}) for i in range(count)]


def random_configurations(space: KnobSpace, count: int, rng: np.random.Generator) -> list[KnobConfiguration]:
    """``count`` uniform draws, one value per knob."""
    columns: dict[str, list[float | str]] = {}
    for spec in space.knobs:
        if spec.kind is KnobKind.NUMERIC:
            assert spec.min is not None and spec.max is not None
            columns[spec.name] = [float(v) for v in rng.uniform(spec.min, spec.max, size=count)]
        else:
            columns[spec.name] = list(_draw_level(rng, spec.levels, count))
    return [KnobConfiguration(values={name: columns[name][i] for name in space.names}) for i in range(count)]


# --- State ---

@dataclass
class TunerState:
    """Append-only observations plus the run's random stream."""
    seed: int = 0
    configs: list[KnobConfiguration] = field(default_factory=list)
    encodings: list[np.ndarray] = field(default_factory=list)
    totals: list[float] = field(default_factory=list)
    rng: np.random.Generator = field(init=False)

    def __post_init__(self) -> None:
        self.rng = np.random.default_rng(self.seed)

    def add(self, config: KnobConfiguration, encoding: np.ndarray, total: float) -> None:
        self.configs.append(config)
        self.encodings.append(np.asarray(encoding, dtype=float))
        self.totals.append(float(total))

    def __len__(self) -> int:
        return len(self.totals)

    def best(self) -> tuple[KnobConfiguration, float]:
        """Minimum-total observation; the earliest wins ties."""
        if not self.totals:
            raise InsufficientDataError("no observations yet")
        i = int(np.argmin(self.totals))
        return self.configs[i], self.totals[i]


# --- Gaussian process ---

def se_kernel(A: np.ndarray, B: np.ndarray, length_scale: float, signal_variance: float) -> np.ndarray:
    sq = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * A @ B.T
    return signal_variance * np.exp(-np.maximum(sq, 0.0) / (2.0 * length_scale**2))


class GaussianProcess:
    """Zero-mean GP on standardized targets; hyperparameters by grid-searched marginal likelihood."""

    def __init__(
        self,
        length_scales: tuple[float, ...] = LENGTH_SCALES,
        signal_variances: tuple[float, ...] = SIGNAL_VARIANCES,
        jitter: float = JITTER,
    ):
        self.length_scales = length_scales
        self.signal_variances = signal_variances
        self.jitter = jitter
        self.length_scale = length_scales[0]
        self.signal_variance = signal_variances[0]

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GaussianProcess":
        self.X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        std = float(y.std())
        self.y_std = std if std > 1e-12 else 1.0
        self.z = (y - self.y_mean) / self.y_std

        best_nll = np.inf
        chosen = None
        n = len(self.z)
        for ell in self.length_scales:
            for s2 in self.signal_variances:
                K = se_kernel(self.X, self.X, ell, s2) + self.jitter * np.eye(n)
                try:
                    factor = cho_factor(K, lower=True)
                except LinAlgError:
                    continue
                alpha = cho_solve(factor, self.z)
                nll = 0.5 * self.z @ alpha + np.sum(np.log(np.diag(factor[0]))) + 0.5 * n * np.log(2 * np.pi)
                if nll < best_nll:
                    best_nll = nll
                    chosen = (ell, s2, factor, alpha)
        if chosen is None:
            raise LinAlgError("kernel matrix not positive definite for any hyperparameter pair")
        self.length_scale, self.signal_variance, self._factor, self._alpha = chosen
        return self

    def predict_standardized(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in standardized units."""
        Ks = se_kernel(np.asarray(Xs, dtype=float), self.X, self.length_scale, self.signal_variance)
        mean = Ks @ self._alpha
        v = cho_solve(self._factor, Ks.T)
        var = np.maximum(self.signal_variance - np.sum(Ks * v.T, axis=1), 0.0)
        return mean, np.sqrt(var)

    def predict(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean, std = self.predict_standardized(Xs)
        return self.y_mean + self.y_std * mean, self.y_std * std


def expected_improvement(mean: np.ndarray, std: np.ndarray, incumbent: float) -> np.ndarray:
    """EI for minimization; non-negative everywhere."""
    improvement = incumbent - mean
    safe = np.where(std > 1e-12, std, 1.0)
    z = improvement / safe
    ei = improvement * norm.cdf(z) + std * norm.pdf(z)
    ei = np.where(std > 1e-12, ei, np.maximum(improvement, 0.0))
    return np.maximum(ei, 0.0)


def bo_recommend(state: TunerState, space: KnobSpace, candidate_count: int = CANDIDATE_COUNT) -> KnobConfiguration:
    """Candidate with maximal expected improvement; the first index wins ties.

    Raises:
        InsufficientDataError: fewer than two observations.
    """
    if len(state) < 2:
        raise InsufficientDataError(f"GP needs >= 2 observations, have {len(state)}")
    gp = GaussianProcess().fit(np.vstack(state.encodings), np.asarray(state.totals))
    candidates = random_configurations(space, candidate_count, state.rng)
    mean, std = gp.predict_standardized(encode_many(space, candidates))
    ei = expected_improvement(mean, std, float(gp.z.min()))
    pick = int(np.argmax(ei))
    logfire.debug(
        "GP length_scale={ls} signal={s2}; best EI {ei:.4g}",
        ls=gp.length_scale,
        s2=gp.signal_variance,
        ei=float(ei[pick]),
    )
    return candidates[pick]


def random_recommend(state: TunerState, space: KnobSpace) -> KnobConfiguration:
    return random_configurations(space, 1, state.rng)[0]


# --- Tuner contract ---

class Tuner(ABC):
    """observe / recommend / best over one knob space."""

    name = "tuner"

    def __init__(self, space: KnobSpace, seed: int = 0):
        self.space = space
        self.state = TunerState(seed=seed)

    def observe(self, config: KnobConfiguration, total: float) -> None:
        self.state.add(config, encode_configuration(self.space, config), total)

    @abstractmethod
    def recommend(self) -> KnobConfiguration: ...

    def best(self) -> tuple[KnobConfiguration, float]:
        return self.state.best()


class BayesianOptimizationTuner(Tuner):
    name = "bo"

    def __init__(self, space: KnobSpace, seed: int = 0, candidate_count: int = CANDIDATE_COUNT):
        super().__init__(space, seed)
        self.candidate_count = candidate_count

    def recommend(self) -> KnobConfiguration:
        if len(self.state) < 2:
            return random_recommend(self.state, self.space)
        return bo_recommend(self.state, self.space, self.candidate_count)


class RandomSearchTuner(Tuner):
    name = "random"

    def recommend(self) -> KnobConfiguration:
        return random_recommend(self.state, self.space)


def make_tuner(name: str, space: KnobSpace, seed: int = 0, candidate_count: int = CANDIDATE_COUNT) -> Tuner:
    if name == "bo":
        return BayesianOptimizationTuner(space, seed, candidate_count)
    if name == "random":
        return RandomSearchTuner(space, seed)
    raise ConfigError(f"unknown tuner {name!r}; expected 'bo' or 'random'")
