"""Per-task-class output length estimation.

Each class keeps a running Gaussian fit of realized output lengths (Welford
update). A prediction is one rounded draw from that fit, falling back to the
class prior and then to a global default while fewer than two lengths have
been seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .core import GaussianPrior, OutputPrior, RangePrior, Request, TaskClass, WorkloadError

DEFAULT_OUTPUT_LEN = 256


@dataclass(frozen=True)
class LengthModel:
    task_class_id: int
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    prior: OutputPrior | None = None

    @property
    def variance(self) -> float:
        """Sample variance; 0 with fewer than two observations."""
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        return {
            "task_class_id": self.task_class_id,
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
        }


def observe(model: LengthModel, actual_len: int) -> LengthModel:
    if actual_len < 1:
        raise WorkloadError("non-positive length")
    count = model.count + 1
    delta = actual_len - model.mean
    mean = model.mean + delta / count
    m2 = model.m2 + delta * (actual_len - mean)
    return replace(model, count=count, mean=mean, m2=max(m2, 0.0))


def predict_len(model: LengthModel, rng: np.random.Generator, default: int = DEFAULT_OUTPUT_LEN) -> int:
    if model.count >= 2:
        value = rng.normal(model.mean, model.std) if model.std > 0 else model.mean
    elif isinstance(model.prior, GaussianPrior):
        p = model.prior
        value = rng.normal(p.mean, p.std) if p.std > 0 else p.mean
    elif isinstance(model.prior, RangePrior):
        return int(rng.integers(model.prior.low, model.prior.high + 1))
    else:
        value = default
    return max(1, int(round(value)))


def simulate_predictor_error(true_len: int, error_pct: float, rng: np.random.Generator) -> int:
    """Emulate an external predictor off by at most ``error_pct`` (relative)."""
    if error_pct < 0:
        raise ValueError("error_pct must be >= 0")
    u = rng.uniform(-error_pct, error_pct) if error_pct > 0 else 0.0
    return max(1, int(round(true_len * (1.0 + u))))


class OutputEstimator:
    """Length models for every task class of a workload."""

    def __init__(self, classes: Iterable[TaskClass], default: int = DEFAULT_OUTPUT_LEN):
        self.default = default
        self.models = {c.id: LengthModel(c.id, prior=c.output_prior) for c in classes}

    def observe(self, task_class_id: int, actual_len: int) -> None:
        self.models[task_class_id] = observe(self.models[task_class_id], actual_len)

    def predict(self, request: Request, rng: np.random.Generator) -> int:
        return predict_len(self.models[request.task_class_id], rng, self.default)

    def annotate(self, requests: Iterable[Request], rng: np.random.Generator) -> list[Request]:
        return [r.with_prediction(self.predict(r, rng)) for r in requests]

    def state(self) -> list[dict]:
        return [m.to_dict() for _, m in sorted(self.models.items())]


def annotate_lengths(
    requests: Iterable[Request],
    classes: Iterable[TaskClass],
    mode: str,
    rng: np.random.Generator,
    error_pct: float = 0.0,
    history: Iterable[Request] = (),
) -> tuple[list[Request], OutputEstimator | None]:
    """Attach predicted output lengths.

    ``mode`` is ``oracle`` (true length), ``error`` (true length with uniform
    relative error ``error_pct``) or ``gaussian`` (per-class estimator warmed
    on ``history``).
    """
    requests = list(requests)
    if mode == "oracle":
        return [r.with_prediction(r.true_output_len) for r in requests], None
    if mode == "error":
        return [r.with_prediction(simulate_predictor_error(r.true_output_len, error_pct, rng)) for r in requests], None
    if mode == "gaussian":
        est = OutputEstimator(classes)
        for past in history:
            est.observe(past.task_class_id, past.true_output_len)
        return est.annotate(requests, rng), est
    raise ValueError(f"unknown length mode {mode!r}")
