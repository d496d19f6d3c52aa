"""Discrete-event replay of schedules against a synthetic backend.

The backend's ground truth is the latency model evaluated on each request's
true output length, optionally perturbed by a per-request multiplicative
noise factor. Batches on an instance run back to back, separated by a fixed
dispatch gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import median
from typing import Callable, Sequence

import numpy as np

from .core import (
    InstanceState,
    LatencyCoefficients,
    MetricsReport,
    Request,
    RequestTiming,
    Schedule,
    TaskClass,
    Workload,
)
from .mapper import DEFAULT_N_CAP, AnnealConfig, SearchSpaceError, input_order
from .latency import predict_decode_total, predict_prefill
from .objective import _as_map, meets_slo
from .scheduler import DEFAULT_DISPATCH_GAP_MS, InstanceQueue, schedule_all

COMPARE_COLUMNS = (
    "policy",
    "seed",
    "n_requests",
    "max_batch",
    "attainment",
    "avg_latency_ms",
    "g_req_per_ms",
    "overhead_ms",
)


@dataclass(frozen=True)
class BatchEvent:
    instance: int
    batch_index: int
    start_ms: float
    end_ms: float
    members: tuple[int, ...]


@dataclass
class SimulationResult:
    report: MetricsReport
    events: list[BatchEvent] = field(default_factory=list)
    schedule: Schedule | None = None


class _Backend:
    def __init__(self, requests, classes, coeffs: LatencyCoefficients, noise_pct: float, seed: int):
        self.reqs = _as_map(requests)
        self.classes = _as_map(classes)
        self.coeffs = coeffs
        self.noise_pct = noise_pct
        self.rng = np.random.default_rng(seed)

    def factor(self) -> float:
        if self.noise_pct <= 0:
            return 1.0
        return 1.0 + self.rng.uniform(-self.noise_pct, self.noise_pct)

    def execute(self, batch: Sequence[int]) -> dict[int, tuple[float, float, float]]:
        """Realized (exec, prefill, decode) per member at this batch size."""
        b = len(batch)
        out = {}
        for rid in batch:
            r = self.reqs[rid]
            f = self.factor()
            prefill = predict_prefill(self.coeffs, b, r.input_len)
            decode = predict_decode_total(self.coeffs, b, r.input_len, r.true_output_len)
            if f != 1.0:
                prefill *= f
                decode *= f
            out[rid] = (prefill + decode, prefill, decode)
        return out

    def timing(self, rid: int, wait: float, realized: tuple[float, float, float]) -> RequestTiming:
        exec_ms, prefill, decode = realized
        r = self.reqs[rid]
        slo = self.classes[r.task_class_id].slo
        e2e = exec_ms + wait
        ttft = prefill + wait
        tpot = decode / r.true_output_len
        return RequestTiming(wait, exec_ms, prefill, e2e, ttft, tpot, meets_slo(slo.kind, e2e, ttft, tpot, slo))


def _replay(backend: _Backend, queues: list[InstanceQueue], gap_ms: float):
    timings: dict[int, RequestTiming] = {}
    events: list[BatchEvent] = []
    for queue in queues:
        busy = 0.0
        k = 0
        # the instance is ready again as soon as its previous batch completes
        while (batch := queue.dispatch(instance_ready=True)) is not None:
            start = busy + k * gap_ms
            realized = backend.execute(batch)
            span = max(v[0] for v in realized.values())
            for rid in batch:
                timings[rid] = backend.timing(rid, start, realized[rid])
            events.append(BatchEvent(queue.instance_id, k, start, start + span, tuple(batch)))
            busy += span
            k += 1
    return timings, events


def run(
    schedule: Schedule,
    requests: Sequence[Request],
    classes: Sequence[TaskClass],
    coeffs: LatencyCoefficients,
    noise_pct: float = 0.0,
    seed: int = 0,
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
    overhead_ms: float = 0.0,
    instances: Sequence[InstanceState] | None = None,
) -> SimulationResult:
    """Replay a fixed schedule (one lane per instance) and measure realized latencies."""
    ids = [inst.id for inst in instances] if instances else list(range(len(schedule.lanes)))
    queues = [InstanceQueue(i, lane) for i, lane in zip(ids, schedule.lanes)]
    backend = _Backend(requests, classes, coeffs, noise_pct, seed)
    timings, events = _replay(backend, queues, dispatch_gap_ms)
    return SimulationResult(MetricsReport.from_timings(timings, overhead_ms), events, schedule)


def run_fcfs(
    requests: Sequence[Request],
    instances: Sequence[InstanceState],
    classes: Sequence[TaskClass],
    coeffs: LatencyCoefficients,
    max_batch: int | None = None,
    noise_pct: float = 0.0,
    seed: int = 0,
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
) -> SimulationResult:
    """First-come-first-serve baseline: whichever instance frees up first takes
    the next (up to) max-batch requests in arrival order."""
    pending = [r.id for r in input_order(requests)]
    backend = _Backend(requests, classes, coeffs, noise_pct, seed)
    busy = {inst.id: 0.0 for inst in instances}
    count = {inst.id: 0 for inst in instances}
    lanes: dict[int, list[tuple[int, ...]]] = {inst.id: [] for inst in instances}
    limits = {inst.id: (max_batch or inst.max_batch_size) for inst in instances}
    timings: dict[int, RequestTiming] = {}
    events: list[BatchEvent] = []
    pos = 0
    while pos < len(pending):
        inst_id = min(busy, key=lambda i: (busy[i] + count[i] * dispatch_gap_ms, i))
        batch = tuple(pending[pos:pos + limits[inst_id]])
        pos += len(batch)
        start = busy[inst_id] + count[inst_id] * dispatch_gap_ms
        realized = backend.execute(batch)
        span = max(v[0] for v in realized.values())
        for rid in batch:
            timings[rid] = backend.timing(rid, start, realized[rid])
        events.append(BatchEvent(inst_id, count[inst_id], start, start + span, batch))
        lanes[inst_id].append(batch)
        busy[inst_id] += span
        count[inst_id] += 1
    schedule = Schedule(tuple(tuple(lanes[i.id]) for i in instances))
    return SimulationResult(MetricsReport.from_timings(timings), events, schedule)


@dataclass
class ComparisonRow:
    policy: str
    seed: int | str
    n_requests: int
    max_batch: int
    attainment: float
    avg_latency_ms: float
    g_req_per_ms: float
    overhead_ms: float
    predicted_g: float | None = None

    def as_csv(self) -> dict:
        return {k: getattr(self, k) for k in COMPARE_COLUMNS}


WorkloadSource = Workload | Callable[[int], Workload]


def simulate_policy(
    policy: str,
    workload: Workload,
    instances: Sequence[InstanceState],
    coeffs: LatencyCoefficients,
    config: AnnealConfig,
    max_batch: int,
    noise_pct: float = 0.0,
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
    predictor_coeffs: LatencyCoefficients | None = None,
    n_cap: int = DEFAULT_N_CAP,
) -> tuple[SimulationResult, float | None]:
    """Schedule with the predictor coefficients, replay against ``coeffs``.

    Returns the simulation and the predicted G (None for FCFS)."""
    reqs = list(workload.requests)
    if policy == "fcfs":
        sim = run_fcfs(reqs, instances, workload.classes, coeffs, max_batch, noise_pct, config.seed, dispatch_gap_ms)
        return sim, None
    result = schedule_all(reqs, instances, predictor_coeffs or coeffs, workload.classes, config, max_batch, policy, n_cap)
    sim = run(result.schedule, reqs, workload.classes, coeffs, noise_pct, config.seed, dispatch_gap_ms,
              result.overhead_ms, instances)
    met = sum(ev.n for ev in result.per_instance)
    total = sum(ev.t_ms for ev in result.per_instance)
    return sim, (met / total if total > 0 else 0.0)


def compare(
    workload: WorkloadSource,
    instances: Sequence[InstanceState],
    coeffs: LatencyCoefficients,
    policies: Sequence[str],
    seeds: Sequence[int],
    config: AnnealConfig = AnnealConfig(),
    max_batch: int = 1,
    noise_pct: float = 0.0,
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
    n_cap: int = DEFAULT_N_CAP,
    predictor_coeffs: LatencyCoefficients | None = None,
) -> list[ComparisonRow]:
    """One row per (seed, policy) plus a median row per policy.

    ``workload`` is either a fixed workload or a function from seed to
    workload; requests must already carry predicted output lengths.
    """
    rows: list[ComparisonRow] = []
    for seed in seeds:
        wl = workload(seed) if callable(workload) else workload
        if "exhaustive" in policies and len(wl.requests) > n_cap * len(instances):
            raise SearchSpaceError(f"exhaustive search refused: {len(wl.requests)} requests exceeds cap of {n_cap}")
        cfg = AnnealConfig(config.t0, config.t_thres, config.iter, config.tau, seed, config.objective_scale)
        for policy in policies:
            sim, predicted = simulate_policy(policy, wl, instances, coeffs, cfg, max_batch, noise_pct,
                                             dispatch_gap_ms, predictor_coeffs, n_cap)
            rep = sim.report
            rows.append(ComparisonRow(policy, seed, len(wl.requests), max_batch, rep.slo_attainment,
                                      rep.avg_latency_ms, rep.g, rep.scheduling_overhead_ms, predicted))
    rows.extend(median_rows(rows))
    return rows


def median_rows(rows: Sequence[ComparisonRow]) -> list[ComparisonRow]:
    out = []
    policies = list(dict.fromkeys(r.policy for r in rows if r.seed != "median"))
    for policy in policies:
        sel = [r for r in rows if r.policy == policy and r.seed != "median"]
        out.append(ComparisonRow(
            policy,
            "median",
            int(median(r.n_requests for r in sel)),
            sel[0].max_batch,
            median(r.attainment for r in sel),
            median(r.avg_latency_ms for r in sel),
            median(r.g_req_per_ms for r in sel),
            median(r.overhead_ms for r in sel),
        ))
    return out
