"""
GMM labeler - per-query latency mixtures and n-bit category labels.

Each query's latencies across knob configurations are modelled as a
one-dimensional Gaussian mixture; a configuration's label marks the
components whose posterior responsibility at its latency reaches ``tau``.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import logfire
import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .base import StageMetadata, stable_seed
from .errors import ConvergenceError, InsufficientDataError, ShapeMismatchError
from .models import CategoryLabel, EvaluationRecord, GaussianMixture, MixtureComponent

MIN_SAMPLES = 8
TAU = 0.2
RESTARTS = 5
MAX_ITERATIONS = 200
TOLERANCE = 1e-6
MONOTONE_SLACK = 1e-9

_METADATA = StageMetadata(phase="pretrain", action="labeling", component="gmm-labeler")


def variance_floor(latencies: np.ndarray) -> float:
    return 1e-6 * (float(np.var(latencies)) + 1e-12)


def _log_joint(x: np.ndarray, weights: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return log_w + norm.logpdf(x[:, None], loc=means, scale=np.sqrt(variances))


@dataclass
class _EMResult:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    trace: list[float] = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return self.trace[-1]


def _check_monotone(trace: list[float], value: float) -> None:
    if trace and value < trace[-1] - MONOTONE_SLACK * max(1.0, abs(trace[-1])):
        raise ConvergenceError(f"EM log-likelihood fell from {trace[-1]:.9g} to {value:.9g}")


def _run_em(
    x: np.ndarray,
    weights: np.ndarray,
    means: np.ndarray,
    variances: np.ndarray,
    floor: float,
) -> _EMResult | None:
    """Expectation-maximization from the given start; None if a component empties."""
    trace: list[float] = []
    for _ in range(MAX_ITERATIONS):
        log_p = _log_joint(x, weights, means, variances)
        log_norm = logsumexp(log_p, axis=1)
        ll = float(log_norm.sum())
        _check_monotone(trace, ll)
        trace.append(ll)
        if len(trace) > 1 and trace[-1] - trace[-2] < TOLERANCE:
            break
        resp = np.exp(log_p - log_norm[:, None])
        mass = resp.sum(axis=0)
        if np.any(mass < 1e-8):
            return None
        weights = mass / len(x)
        means = (resp * x[:, None]).sum(axis=0) / mass
        variances = np.maximum((resp * (x[:, None] - means) ** 2).sum(axis=0) / mass, floor)
    else:
        ll = float(logsumexp(_log_joint(x, weights, means, variances), axis=1).sum())
        _check_monotone(trace, ll)
        trace.append(ll)
    return _EMResult(weights=weights, means=means, variances=variances, trace=trace)


def _fit_k(x: np.ndarray, k: int, floor: float, rng: np.random.Generator) -> _EMResult | None:
    quantiles = np.quantile(x, (np.arange(k) + 0.5) / k)
    spread = float(np.std(x))
    pooled = max(float(np.var(x)), floor)
    best: _EMResult | None = None
    for restart in range(RESTARTS):
        means = quantiles.copy()
        if restart > 0:
            means = means + rng.normal(0.0, 0.1 * spread + 1e-12, size=k)
        result = _run_em(x, np.full(k, 1.0 / k), means, np.full(k, pooled), floor)
        if result is not None and (best is None or result.log_likelihood > best.log_likelihood):
            best = result
    return best


def bic(log_likelihood: float, k: int, n: int) -> float:
    """-2 log L + (3k - 1) ln N."""
    return -2.0 * log_likelihood + (3 * k - 1) * np.log(n)


def fit_gmm(latencies: Sequence[float], max_components: int, seed: int = 0) -> GaussianMixture:
    """Fit a 1-D mixture, choosing k in 1..max_components by minimum BIC.

    Raises:
        InsufficientDataError: fewer than 8 samples.
        ValueError: a non-positive latency.
    """
    x = np.asarray(latencies, dtype=float)
    if len(x) < MIN_SAMPLES:
        raise InsufficientDataError(f"need >= {MIN_SAMPLES} latencies, got {len(x)}")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("latencies must be positive and finite")

    rng = np.random.default_rng(seed)
    floor = variance_floor(x)
    k_max = max(1, min(max_components, len(np.unique(x))))
    chosen: tuple[float, _EMResult] | None = None
    for k in range(1, k_max + 1):
        result = _fit_k(x, k, floor, rng)
        if result is None:
            continue
        score = bic(result.log_likelihood, k, len(x))
        if chosen is None or score < chosen[0]:
            chosen = (score, result)
    assert chosen is not None
    score, result = chosen

    order = np.argsort(result.means, kind="stable")
    weights = result.weights[order] / result.weights.sum()
    components = tuple(
        MixtureComponent(weight=float(w), mean=float(m), variance=float(v))
        for w, m, v in zip(weights, result.means[order], result.variances[order])
    )
    return GaussianMixture(
        components=components,
        log_likelihood=result.log_likelihood,
        bic=float(score),
        trace=tuple(result.trace),
    )


def responsibilities(mixture: GaussianMixture, latency: float) -> np.ndarray:
    """Posterior membership probabilities of ``latency`` per component."""
    weights = np.array([c.weight for c in mixture.components])
    means = np.array([c.mean for c in mixture.components])
    variances = np.array([c.variance for c in mixture.components])
    log_p = _log_joint(np.array([float(latency)]), weights, means, variances)[0]
    return np.exp(log_p - logsumexp(log_p))


def assign_label(mixture: GaussianMixture, latency: float, width: int, tau: float = TAU) -> CategoryLabel:
    """Mark every component with responsibility >= tau; never empty.

    Raises:
        ShapeMismatchError: ``width`` is smaller than the component count.
    """
    if width < mixture.k:
        raise ShapeMismatchError(f"label width {width} < {mixture.k} mixture components")
    resp = responsibilities(mixture, latency)
    bits = [0] * width
    for j, r in enumerate(resp):
        if r >= tau:
            bits[j] = 1
    if not any(bits):
        bits[int(np.argmax(resp))] = 1
    return CategoryLabel(bits=tuple(bits))


@dataclass
class LabeledDataset:
    """Per-query mixtures and the labeled observations they produced."""
    mixtures: dict[str, GaussianMixture]
    records: list[EvaluationRecord]

    def label(self, query_id: str, config_id: str) -> CategoryLabel:
        for record in self.records:
            if record.query_id == query_id and record.config_id == config_id:
                return record.label
        raise KeyError((query_id, config_id))


def label_dataset(
    samples: Mapping[str, Sequence[tuple[str, float]]],
    width: int,
    seed: int = 0,
    tau: float = TAU,
    task_id: str | None = None,
) -> LabeledDataset:
    """Fit one mixture per query and label every ``(config_id, latency)`` sample.

    Raises:
        InsufficientDataError: a query has fewer than 8 samples (named in the message).
    """
    mixtures: dict[str, GaussianMixture] = {}
    records: list[EvaluationRecord] = []
    for query_id, observations in samples.items():
        if len(observations) < MIN_SAMPLES:
            raise InsufficientDataError(
                f"query {query_id} has {len(observations)} samples, need >= {MIN_SAMPLES}"
            )
        with logfire.span("fit mixture for {query_id}", query_id=query_id, **_METADATA.to_dict(task_id)):
            mixture = fit_gmm([lat for _, lat in observations], width, seed=stable_seed(seed, query_id))
            logfire.debug("query {query_id}: k={k}, bic={bic:.3f}", query_id=query_id, k=mixture.k, bic=mixture.bic)
        mixtures[query_id] = mixture
        for config_id, latency in observations:
            records.append(
                EvaluationRecord(
                    query_id=query_id,
                    config_id=config_id,
                    latency=latency,
                    label=assign_label(mixture, latency, width, tau),
                )
            )
    return LabeledDataset(mixtures=mixtures, records=records)
