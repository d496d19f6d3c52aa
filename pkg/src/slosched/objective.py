"""Waiting times, per-request latencies, SLO flags and the objective G.

Batches on one instance run back to back; a batch lasts as long as its
slowest member, and every request waits for all earlier batches on its
instance. G is the number of requests meeting their SLO divided by the sum
of their end-to-end latencies (requests per ms).
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from .core import (
    EvaluatedSchedule,
    LatencyCoefficients,
    Request,
    RequestTiming,
    Schedule,
    SloKind,
    SloSpec,
    TaskClass,
    WorkloadError,
)
from .latency import predict_exec, predict_prefill, predict_tpot


def _as_map(items, key="id") -> dict:
    if isinstance(items, Mapping):
        return dict(items)
    return {getattr(x, key): x for x in items}


def batch_exec_profile(
    schedule: Schedule, coeffs: LatencyCoefficients, requests
) -> dict[int, tuple[float, float, float]]:
    """Map request id -> (exec_ms, prefill_ms, tpot_ms) at its own batch size."""
    reqs = _as_map(requests)
    out = {}
    for lane in schedule.lanes:
        for batch in lane:
            b = len(batch)
            for rid in batch:
                r = reqs[rid]
                l_o = r.predicted_output_len
                if l_o is None:
                    raise WorkloadError(f"request {rid} has no predicted output length")
                out[rid] = (
                    predict_exec(coeffs, b, r.input_len, l_o),
                    predict_prefill(coeffs, b, r.input_len),
                    predict_tpot(coeffs, b, r.input_len, l_o),
                )
    return out


def waiting_times(schedule: Schedule, exec_ms: Mapping[int, float]) -> dict[int, float]:
    waits = {}
    for lane in schedule.lanes:
        elapsed = 0.0
        for batch in lane:
            for rid in batch:
                waits[rid] = elapsed
            elapsed += max(exec_ms[rid] for rid in batch)
    return waits


def meets_slo(kind: SloKind, e2e_ms: float, ttft_ms: float, tpot_ms: float, slo: SloSpec) -> bool:
    if kind is SloKind.E2E:
        return e2e_ms <= slo.e2e_ms
    return ttft_ms <= slo.ttft_ms and tpot_ms <= slo.tpot_ms


def evaluate(
    schedule: Schedule,
    coeffs: LatencyCoefficients,
    requests,
    classes,
) -> EvaluatedSchedule:
    reqs = _as_map(requests)
    cls = _as_map(classes)
    profile = batch_exec_profile(schedule, coeffs, reqs)
    waits = waiting_times(schedule, {rid: p[0] for rid, p in profile.items()})
    timings = {}
    n = 0
    total = 0.0
    for rid in schedule.request_ids():
        exec_ms, prefill_ms, tpot_ms = profile[rid]
        wait = waits[rid]
        e2e = exec_ms + wait
        ttft = prefill_ms + wait
        slo = cls[reqs[rid].task_class_id].slo
        met = meets_slo(slo.kind, e2e, ttft, tpot_ms, slo)
        timings[rid] = RequestTiming(wait, exec_ms, prefill_ms, e2e, ttft, tpot_ms, met)
        n += met
        total += e2e
    g = n / total if total > 0 else 0.0
    return EvaluatedSchedule(schedule, timings, n, total, g)


class ScoreTables:
    """Precomputed per-(batch size, request) latencies for fast scoring.

    Requests are addressed by their index in ``requests``. A request meets
    its SLO at wait ``w`` iff ``base[b][i] + w <= limit[b][i]``; for e2e
    classes ``base`` is the execution time, for TTFT/TPOT classes it is the
    prefill time and ``limit`` is -inf when the TPOT target is already missed.
    The arithmetic matches :func:`evaluate` term for term.
    """

    def __init__(
        self,
        requests: Sequence[Request],
        coeffs: LatencyCoefficients,
        classes: Iterable[TaskClass],
        max_batch: int,
    ):
        cls = _as_map(classes)
        self.requests = list(requests)
        self.ids = [r.id for r in self.requests]
        self.max_batch = max_batch
        size = max(1, min(max_batch, len(self.requests)))
        self.exec: list[list[float]] = [[]]
        self.base: list[list[float]] = [[]]
        self.limit: list[list[float]] = [[]]
        for b in range(1, size + 1):
            ex, base, lim = [], [], []
            for r in self.requests:
                if r.predicted_output_len is None:
                    raise WorkloadError(f"request {r.id} has no predicted output length")
                e = predict_exec(coeffs, b, r.input_len, r.predicted_output_len)
                slo = cls[r.task_class_id].slo
                ex.append(e)
                if slo.kind is SloKind.E2E:
                    base.append(e)
                    lim.append(slo.e2e_ms)
                else:
                    base.append(predict_prefill(coeffs, b, r.input_len))
                    tpot = predict_tpot(coeffs, b, r.input_len, r.predicted_output_len)
                    lim.append(slo.ttft_ms if tpot <= slo.tpot_ms else float("-inf"))
            self.exec.append(ex)
            self.base.append(base)
            self.limit.append(lim)

    def score(self, order: Sequence[int], sizes: Sequence[int]) -> tuple[int, float]:
        """Return (requests meeting SLO, summed e2e ms) for index order + batch sizes."""
        if len(sizes) == len(order):
            return self._score_singletons(order)
        ex_t, base_t, lim_t = self.exec, self.base, self.limit
        wait = 0.0
        total = 0.0
        met = 0
        pos = 0
        for s in sizes:
            ex, base, lim = ex_t[s], base_t[s], lim_t[s]
            span = 0.0
            for k in range(pos, pos + s):
                i = order[k]
                e = ex[i]
                total += e + wait
                if base[i] + wait <= lim[i]:
                    met += 1
                if e > span:
                    span = e
            wait += span
            pos += s
        return met, total

    def _score_singletons(self, order: Sequence[int]) -> tuple[int, float]:
        ex, base, lim = self.exec[1], self.base[1], self.limit[1]
        wait = 0.0
        total = 0.0
        met = 0
        for i in order:
            e = ex[i]
            total += e + wait
            if base[i] + wait <= lim[i]:
                met += 1
            wait += e
        return met, total

    def g(self, order: Sequence[int], sizes: Sequence[int]) -> float:
        met, total = self.score(order, sizes)
        return met / total if total > 0 else 0.0

    def to_schedule(self, order: Sequence[int], sizes: Sequence[int]) -> Schedule:
        return Schedule.from_order([self.ids[i] for i in order], sizes)
