"""Multi-instance orchestration: instance assignment, per-instance priority
mapping and batch dispatch queues."""

from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import EvaluatedSchedule, InstanceState, LatencyCoefficients, Request, Schedule, WorkloadError
from .latency import predict_exec
from .mapper import DEFAULT_N_CAP, AnnealConfig, anneal, exhaustive, input_order, pack
from .objective import evaluate

POLICIES = ("sa", "exhaustive", "fcfs")
DEFAULT_DISPATCH_GAP_MS = 0.1

# Qwen2.5-7B, fp16 KV cache: 28 layers * 2 (K,V) * 4 kv-heads * 128 dims * 2 bytes
DEFAULT_BYTES_PER_TOKEN = 57344.0
DEFAULT_TOTAL_MEM = 16 * 2**30


class CapacityError(WorkloadError):
    pass


def token_capacity(remaining_mem: float, mu: float, sigma: float) -> int:
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if not 0 < mu <= 1:
        raise ValueError("mu must lie in (0, 1]")
    # epsilon absorbs round-off from repeated byte debits
    return max(0, math.floor(remaining_mem * mu / sigma + 1e-9))


def default_instances(count: int = 1, max_batch: int = 1) -> list[InstanceState]:
    return [
        InstanceState(i, DEFAULT_TOTAL_MEM, mem_utility=0.9, bytes_per_token=DEFAULT_BYTES_PER_TOKEN, max_batch_size=max_batch)
        for i in range(count)
    ]


def load_instances(path: str | Path) -> list[InstanceState]:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["instances"]
    return [InstanceState.from_dict(d) for d in data]


def save_instances(path: str | Path, instances: Sequence[InstanceState]) -> None:
    with open(path, "w") as fh:
        json.dump({"instances": [i.to_dict() for i in instances]}, fh, indent=2)


@dataclass
class Assignment:
    lanes: dict[int, list[Request]]
    epochs: int


def assign_instances(
    requests: Sequence[Request], instances: Sequence[InstanceState], coeffs: LatencyCoefficients
) -> Assignment:
    """Greedy round-robin: each request (shortest predicted e2e first) goes to
    the instance with the most remaining token capacity. When even that one
    cannot fit the request, every instance's memory is reset."""
    if not instances:
        raise ValueError("need at least one instance")
    remaining = [inst.total_mem for inst in instances]
    lanes: dict[int, list[Request]] = {inst.id: [] for inst in instances}
    epochs = 0

    def best() -> tuple[int, int]:
        caps = [token_capacity(m, i.mem_utility, i.bytes_per_token) for m, i in zip(remaining, instances)]
        top = max(caps)
        return min((k for k, c in enumerate(caps) if c == top), key=lambda k: instances[k].id), top

    def key(r: Request):
        if r.predicted_output_len is None:
            raise WorkloadError(f"request {r.id} has no predicted output length")
        return predict_exec(coeffs, 1, r.input_len, r.predicted_output_len), r.id

    for r in sorted(requests, key=key):
        need = r.input_len + r.predicted_output_len
        k, cap = best()
        if cap < need:
            remaining = [inst.total_mem for inst in instances]
            epochs += 1
            k, cap = best()
            if cap < need:
                raise CapacityError(f"request {r.id} ({need} tokens) cannot fit any instance")
        inst = instances[k]
        remaining[k] -= need * inst.bytes_per_token / inst.mem_utility
        lanes[inst.id].append(r)
    return Assignment(lanes, epochs)


class InstanceQueue:
    """FIFO of whole batches waiting for one instance."""

    def __init__(self, instance_id: int, batches=()):
        self.instance_id = instance_id
        self.batches: deque[tuple[int, ...]] = deque(tuple(b) for b in batches)

    def push(self, batch) -> None:
        self.batches.append(tuple(batch))

    def __len__(self) -> int:
        return len(self.batches)

    def dispatch(self, instance_ready: bool) -> tuple[int, ...] | None:
        if not instance_ready or not self.batches:
            return None
        return self.batches.popleft()


def dispatch(queue: InstanceQueue, instance_ready: bool):
    return queue.dispatch(instance_ready)


def fcfs_schedule(requests: Sequence[Request], max_batch: int) -> Schedule:
    ids = [r.id for r in input_order(requests)]
    return Schedule.from_order(ids, pack(len(ids), max_batch))


@dataclass
class ScheduleResult:
    schedule: Schedule
    per_instance: list[EvaluatedSchedule]
    overhead_ms: float
    queues: list[InstanceQueue] = field(default_factory=list)
    epochs: int = 0
    instance_overhead_ms: list[float] = field(default_factory=list)


def map_priorities(
    requests: Sequence[Request],
    coeffs: LatencyCoefficients,
    classes,
    config: AnnealConfig,
    max_batch: int,
    policy: str = "sa",
    n_cap: int = DEFAULT_N_CAP,
) -> EvaluatedSchedule:
    if policy == "sa":
        return anneal(requests, coeffs, classes, config, max_batch)
    if policy == "exhaustive":
        return exhaustive(requests, coeffs, classes, max_batch, n_cap)
    if policy == "fcfs":
        if not requests:
            return EvaluatedSchedule(Schedule(((),)), {}, 0, 0.0, 0.0)
        return evaluate(fcfs_schedule(requests, max_batch), coeffs, requests, classes)
    raise ValueError(f"unknown policy {policy!r}")


def schedule_all(
    requests: Sequence[Request],
    instances: Sequence[InstanceState],
    coeffs: LatencyCoefficients,
    classes,
    config: AnnealConfig,
    max_batch: int | None = None,
    policy: str = "sa",
    n_cap: int = DEFAULT_N_CAP,
) -> ScheduleResult:
    """Assign requests to instances, map priorities per instance and enqueue batches.

    Every instance anneals with the same seed, so identical request subsets
    produce identical per-instance schedules.
    """
    start = time.perf_counter()
    assignment = assign_instances(requests, instances, coeffs)
    lanes = []
    per_instance = []
    queues = []
    lane_times = []
    for inst in instances:
        t_lane = time.perf_counter()
        subset = assignment.lanes[inst.id]
        mb = max_batch if max_batch is not None else inst.max_batch_size
        ev = map_priorities(subset, coeffs, classes, config, mb, policy, n_cap)
        lane_times.append((time.perf_counter() - t_lane) * 1000.0)
        batches = ev.schedule.lanes[0]
        lanes.append(batches)
        per_instance.append(ev)
        queues.append(InstanceQueue(inst.id, batches))
    overhead_ms = (time.perf_counter() - start) * 1000.0
    return ScheduleResult(Schedule(tuple(lanes)), per_instance, overhead_ms, queues, assignment.epochs, lane_times)
