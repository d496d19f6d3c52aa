"""Domain types shared across the scheduler, the simulator and the CLI.

All durations are milliseconds (float). G is expressed in requests per
millisecond; multiply by 1000 for requests per second.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Sequence


class WorkloadError(ValueError):
    """Raised when requests, classes or schedules violate an invariant."""


class SloKind(str, Enum):
    E2E = "e2e"
    TTFT_TPOT = "ttft_tpot"


@dataclass(frozen=True)
class SloSpec:
    kind: SloKind
    e2e_ms: float | None = None
    ttft_ms: float | None = None
    tpot_ms: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SloKind(self.kind))
        if self.kind is SloKind.E2E:
            if self.e2e_ms is None or not self.e2e_ms > 0:
                raise WorkloadError("e2e SLO needs a positive e2e_ms")
        else:
            if self.ttft_ms is None or not self.ttft_ms > 0:
                raise WorkloadError("ttft_tpot SLO needs a positive ttft_ms")
            if self.tpot_ms is None or not self.tpot_ms > 0:
                raise WorkloadError("ttft_tpot SLO needs a positive tpot_ms")

    def to_dict(self) -> dict:
        d = {"slo_kind": self.kind.value}
        for key in ("e2e_ms", "ttft_ms", "tpot_ms"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SloSpec":
        return cls(
            kind=SloKind(d["slo_kind"]),
            e2e_ms=d.get("e2e_ms"),
            ttft_ms=d.get("ttft_ms"),
            tpot_ms=d.get("tpot_ms"),
        )


@dataclass(frozen=True)
class GaussianPrior:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if self.std < 0:
            raise WorkloadError("prior std-dev must be >= 0")


@dataclass(frozen=True)
class RangePrior:
    low: int
    high: int

    def __post_init__(self) -> None:
        if self.low < 1 or self.low > self.high:
            raise WorkloadError("range prior needs 1 <= low <= high")


OutputPrior = GaussianPrior | RangePrior


@dataclass(frozen=True)
class TaskClass:
    id: int
    name: str
    slo: SloSpec
    output_prior: OutputPrior | None = None

    def to_dict(self) -> dict:
        d = {"task": self.name, **self.slo.to_dict()}
        if isinstance(self.output_prior, GaussianPrior):
            d["output_mean"] = self.output_prior.mean
            d["output_std"] = self.output_prior.std
        elif isinstance(self.output_prior, RangePrior):
            d["output_range"] = [self.output_prior.low, self.output_prior.high]
        return d

    @classmethod
    def from_dict(cls, d: dict, class_id: int) -> "TaskClass":
        prior: OutputPrior | None = None
        if "output_range" in d:
            low, high = d["output_range"]
            prior = RangePrior(int(low), int(high))
        elif "output_mean" in d:
            prior = GaussianPrior(float(d["output_mean"]), float(d.get("output_std", 0.0)))
        return cls(id=class_id, name=str(d["task"]), slo=SloSpec.from_dict(d), output_prior=prior)


@dataclass(frozen=True)
class Request:
    id: int
    task_class_id: int
    input_len: int
    true_output_len: int
    predicted_output_len: int | None = None
    arrival_time_ms: float = 0.0

    def with_prediction(self, length: int) -> "Request":
        return Request(
            self.id,
            self.task_class_id,
            self.input_len,
            self.true_output_len,
            int(length),
            self.arrival_time_ms,
        )


@dataclass(frozen=True)
class LatencyCoefficients:
    alpha_p: float
    beta_p: float
    gamma_p: float
    delta_p: float
    alpha_d: float
    beta_d: float
    gamma_d: float
    delta_d: float

    KEYS = ("alpha_p", "beta_p", "gamma_p", "delta_p", "alpha_d", "beta_d", "gamma_d", "delta_d")

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if not all(math.isfinite(v) for v in values):
            raise WorkloadError("latency coefficients must be finite")
        if self.alpha_p < 0 or self.alpha_d < 0:
            raise WorkloadError("alpha_p and alpha_d must be >= 0")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in self.KEYS)

    def to_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "LatencyCoefficients":
        return cls(**{k: float(d[k]) for k in cls.KEYS})

    def scaled(self, factors: dict[str, float]) -> "LatencyCoefficients":
        """Copy with selected coefficients multiplied by the given factors."""
        d = self.to_dict()
        for key, factor in factors.items():
            if key not in d:
                raise KeyError(f"unknown coefficient {key!r}")
            d[key] *= factor
        return LatencyCoefficients(**d)


# Fitted values for Qwen2.5-7B on 2x V100 (vLLM); milliseconds.
TABLE_COEFFICIENTS = LatencyCoefficients(
    alpha_p=0.1,
    beta_p=5.7,
    gamma_p=0.01,
    delta_p=43.67,
    alpha_d=0.0002,
    beta_d=0.275,
    gamma_d=0.00088,
    delta_d=15.85,
)


Batch = tuple[int, ...]


@dataclass(frozen=True)
class Schedule:
    """Ordered batches of request ids, one lane per instance."""

    lanes: tuple[tuple[Batch, ...], ...]

    @classmethod
    def single(cls, batches: Iterable[Iterable[int]]) -> "Schedule":
        return cls((tuple(tuple(b) for b in batches),))

    @classmethod
    def from_lists(cls, lanes: Iterable[Iterable[Iterable[int]]]) -> "Schedule":
        return cls(tuple(tuple(tuple(b) for b in lane) for lane in lanes))

    @classmethod
    def from_order(cls, order: Sequence[int], sizes: Sequence[int]) -> "Schedule":
        batches = []
        pos = 0
        for s in sizes:
            batches.append(tuple(order[pos:pos + s]))
            pos += s
        return cls((tuple(batches),))

    @property
    def batches(self) -> tuple[Batch, ...]:
        """Batches of a single-lane schedule."""
        if len(self.lanes) != 1:
            raise WorkloadError("schedule has more than one lane")
        return self.lanes[0]

    def request_ids(self) -> list[int]:
        return [rid for lane in self.lanes for batch in lane for rid in batch]

    def positions(self) -> dict[int, tuple[int, int, int]]:
        """Map request id -> (lane, batch index, position within lane)."""
        out = {}
        for lane_idx, lane in enumerate(self.lanes):
            pos = 0
            for batch_idx, batch in enumerate(lane):
                for rid in batch:
                    out[rid] = (lane_idx, batch_idx, pos)
                    pos += 1
        return out

    def validate(self, request_ids: Iterable[int], max_batch: int | None = None) -> None:
        seen: set[int] = set()
        for lane in self.lanes:
            for batch in lane:
                if not batch:
                    raise WorkloadError("empty batch")
                if max_batch is not None and len(batch) > max_batch:
                    raise WorkloadError(f"batch of {len(batch)} exceeds max batch {max_batch}")
                for rid in batch:
                    if rid in seen:
                        raise WorkloadError(f"request {rid} scheduled twice")
                    seen.add(rid)
        expected = set(request_ids)
        if seen != expected:
            missing = sorted(expected - seen)
            extra = sorted(seen - expected)
            raise WorkloadError(f"schedule is not a partition (missing={missing}, extra={extra})")

    def to_dict(self) -> dict:
        return {"lanes": [[list(b) for b in lane] for lane in self.lanes]}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls.from_lists(d["lanes"])


@dataclass
class InstanceState:
    id: int
    total_mem: float
    remaining_mem: float | None = None
    mem_utility: float = 0.9
    bytes_per_token: float = 57344.0
    max_batch_size: int = 1

    def __post_init__(self) -> None:
        if self.remaining_mem is None:
            self.remaining_mem = self.total_mem
        if not 0 <= self.remaining_mem <= self.total_mem:
            raise WorkloadError("remaining_mem must lie in [0, total_mem]")
        if not 0 < self.mem_utility <= 1:
            raise WorkloadError("mem_utility must lie in (0, 1]")
        if not self.bytes_per_token > 0:
            raise WorkloadError("bytes_per_token must be > 0")
        if self.max_batch_size < 1:
            raise WorkloadError("max_batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "total_mem": self.total_mem,
            "mu": self.mem_utility,
            "sigma": self.bytes_per_token,
            "max_batch_size": self.max_batch_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceState":
        return cls(
            id=int(d["id"]),
            total_mem=float(d["total_mem"]),
            mem_utility=float(d.get("mu", 0.9)),
            bytes_per_token=float(d.get("sigma", 57344.0)),
            max_batch_size=int(d.get("max_batch_size", 1)),
        )


@dataclass(frozen=True)
class RequestTiming:
    wait_ms: float
    exec_ms: float
    prefill_ms: float
    e2e_ms: float
    ttft_ms: float
    tpot_ms: float
    slo_met: bool


@dataclass
class EvaluatedSchedule:
    schedule: Schedule
    timings: dict[int, RequestTiming]
    n: int
    t_ms: float
    g: float
    # anneal: neighbourhood proposals scored; exhaustive: schedules enumerated
    evaluations: int = 0

    @property
    def attainment(self) -> float:
        return self.n / len(self.timings) if self.timings else 1.0

    @property
    def avg_latency_ms(self) -> float:
        return self.t_ms / len(self.timings) if self.timings else 0.0


@dataclass
class MetricsReport:
    slo_attainment: float
    avg_latency_ms: float
    g: float
    scheduling_overhead_ms: float
    latencies: dict[int, RequestTiming] = field(default_factory=dict)

    @classmethod
    def from_timings(cls, timings: dict[int, RequestTiming], overhead_ms: float = 0.0) -> "MetricsReport":
        count = len(timings)
        met = sum(1 for t in timings.values() if t.slo_met)
        total = sum(t.e2e_ms for t in timings.values())
        if count == 0:
            return cls(1.0, 0.0, 0.0, overhead_ms, {})
        return cls(
            slo_attainment=met / count,
            avg_latency_ms=total / count,
            g=met / total if total > 0 else 0.0,
            scheduling_overhead_ms=overhead_ms,
            latencies=dict(timings),
        )

    @property
    def g_req_per_s(self) -> float:
        return self.g * 1000.0

    def to_dict(self, include_requests: bool = True) -> dict:
        d = {
            "slo_attainment": self.slo_attainment,
            "avg_latency_ms": self.avg_latency_ms,
            "g_req_per_ms": self.g,
            "g_req_per_s": self.g_req_per_s,
            "scheduling_overhead_ms": self.scheduling_overhead_ms,
        }
        if include_requests:
            d["requests"] = {str(k): asdict(v) for k, v in sorted(self.latencies.items())}
        return d


@dataclass(frozen=True)
class Workload:
    classes: tuple[TaskClass, ...]
    requests: tuple[Request, ...]

    def class_map(self) -> dict[int, TaskClass]:
        return {c.id: c for c in self.classes}

    def request_map(self) -> dict[int, Request]:
        return {r.id: r for r in self.requests}


def validate_workload(requests: Iterable[Request], classes: Iterable[TaskClass]) -> Workload:
    """Check ids, lengths and class references; return an immutable workload."""
    classes = tuple(classes)
    requests = tuple(requests)
    class_ids: set[int] = set()
    for c in classes:
        if c.id in class_ids:
            raise WorkloadError(f"duplicate task class id {c.id}")
        class_ids.add(c.id)
    seen: set[int] = set()
    for r in requests:
        if r.id in seen:
            raise WorkloadError(f"duplicate request id {r.id}")
        seen.add(r.id)
        if r.task_class_id not in class_ids:
            raise WorkloadError(f"unknown task_class_id {r.task_class_id} on request {r.id}")
        if r.input_len < 1 or r.true_output_len < 1:
            raise WorkloadError(f"non-positive length on request {r.id}")
        if r.predicted_output_len is not None and r.predicted_output_len < 1:
            raise WorkloadError(f"non-positive length (predicted) on request {r.id}")
    return Workload(classes, requests)
