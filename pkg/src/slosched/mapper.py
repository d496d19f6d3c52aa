"""Priority mapping: search for the request order and batching that maximise G.

``anneal`` is the production path (simulated annealing over order and batch
sizes); ``exhaustive`` enumerates every permutation and batch-size
composition and serves as the optimality oracle for small request counts.

Both work on an index representation of a single-instance schedule: ``order``
is a list of request indices and ``sizes`` the batch-size sequence that cuts
it into consecutive batches.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

from .core import EvaluatedSchedule, LatencyCoefficients, Request, Schedule
from .latency import predict_exec
from .objective import ScoreTables, evaluate

SQUEEZE, DELAY, SWAP = 0, 1, 2
MAX_REDRAWS = 8
DEFAULT_N_CAP = 10
# a 1% relative loss of G at the stop temperature is accepted with probability 1/e
LOSS_UNIT = 0.01


class SearchSpaceError(ValueError):
    """Exhaustive search refused because the request count exceeds the cap."""


@dataclass(frozen=True)
class AnnealConfig:
    t0: float = 500.0
    t_thres: float = 20.0
    iter: int = 100
    tau: float = 0.95
    seed: int = 0
    # multiplier on the G loss inside the acceptance test; None picks
    # t_thres / (LOSS_UNIT * G_start)
    objective_scale: float | None = None

    def __post_init__(self) -> None:
        if not self.t0 > self.t_thres > 0:
            raise ValueError("need t0 > t_thres > 0")
        if self.iter < 1:
            raise ValueError("iter must be >= 1")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.objective_scale is not None and self.objective_scale < 0:
            raise ValueError("objective_scale must be >= 0")

    def levels(self) -> int:
        """Number of temperature levels visited."""
        count, t = 0, self.t0
        while True:
            count += 1
            t *= self.tau
            if t < self.t_thres:
                return count


def input_order(requests: Sequence[Request]) -> list[Request]:
    return sorted(requests, key=lambda r: (r.arrival_time_ms, r.id))


def pack(count: int, max_batch: int) -> list[int]:
    full, rest = divmod(count, max_batch)
    return [max_batch] * full + ([rest] if rest else [])


def _sorted_indices(reqs: Sequence[Request], coeffs: LatencyCoefficients, max_batch: int) -> list[int]:
    keys = [
        (predict_exec(coeffs, max_batch, r.input_len, r.predicted_output_len), r.id)
        for r in reqs
    ]
    return sorted(range(len(reqs)), key=keys.__getitem__)


def initial_candidates(
    requests: Sequence[Request], coeffs: LatencyCoefficients, max_batch: int
) -> tuple[Schedule, Schedule]:
    """Return (sorted-by-predicted-e2e schedule, arrival-order schedule)."""
    reqs = input_order(requests)
    sizes = pack(len(reqs), max_batch)
    idx = _sorted_indices(reqs, coeffs, max_batch)
    ids = [r.id for r in reqs]
    return (
        Schedule.from_order([ids[i] for i in idx], sizes),
        Schedule.from_order(ids, sizes),
    )


def shortcut_check(sorted_schedule: Schedule, coeffs, requests, classes) -> Schedule | None:
    ev = evaluate(sorted_schedule, coeffs, requests, classes)
    return sorted_schedule if ev.n == len(ev.timings) else None


# -- neighbourhood moves on (order, sizes) -----------------------------------


def _locate(sizes: Sequence[int], p: int) -> tuple[int, int]:
    start = 0
    for k, s in enumerate(sizes):
        if p < start + s:
            return k, start
        start += s
    raise IndexError(p)


def _squeeze_at(order, sizes, p, max_batch):
    k, start = _locate(sizes, p)
    if k == 0 or sizes[k - 1] >= max_batch:
        return None
    order = order[:]
    order.insert(start, order.pop(p))
    sizes = sizes[:]
    sizes[k - 1] += 1
    sizes[k] -= 1
    if sizes[k] == 0:
        del sizes[k]
    return order, sizes


def _delay_at(order, sizes, p, max_batch):
    k, start = _locate(sizes, p)
    end = start + sizes[k]
    order = order[:]
    sizes = sizes[:]
    if k + 1 < len(sizes):
        if sizes[k + 1] >= max_batch:
            return None
        order.insert(end - 1, order.pop(p))
        sizes[k + 1] += 1
    else:
        if sizes[k] == 1:
            return None
        order.append(order.pop(p))
        sizes.append(1)
    sizes[k] -= 1
    if sizes[k] == 0:
        del sizes[k]
    return order, sizes


def _swap_at(order, sizes, i, j):
    if i == j:
        return None
    order = order[:]
    order[i], order[j] = order[j], order[i]
    return order, sizes[:]


def _random_swap(order, sizes, rng: random.Random):
    n = len(order)
    if n < 2:
        return None
    i = int(rng.random() * n)
    j = int(rng.random() * (n - 1))
    if j >= i:
        j += 1
    return _swap_at(order, sizes, i, j)


def _propose(order, sizes, rng: random.Random, max_batch: int):
    n = len(order)
    if max_batch == 1:
        # squeeze and delay can never apply; every draw ends in a swap
        return _random_swap(order, sizes, rng)
    for _ in range(MAX_REDRAWS):
        op = int(rng.random() * 3)
        if op == SQUEEZE:
            first = sizes[0]
            if n > first:
                moved = _squeeze_at(order, sizes, first + int(rng.random() * (n - first)), max_batch)
                if moved is not None:
                    return moved
        elif op == DELAY:
            moved = _delay_at(order, sizes, int(rng.random() * n), max_batch)
            if moved is not None:
                return moved
        else:
            moved = _random_swap(order, sizes, rng)
            if moved is not None:
                return moved
    return _random_swap(order, sizes, rng)


def _split(schedule: Schedule) -> tuple[list[int], list[int]]:
    batches = schedule.batches
    return [rid for b in batches for rid in b], [len(b) for b in batches]


def squeeze(schedule: Schedule, request_id: int, max_batch: int) -> Schedule | None:
    """Move a request into the previous batch; None when not applicable."""
    order, sizes = _split(schedule)
    moved = _squeeze_at(order, sizes, order.index(request_id), max_batch)
    return None if moved is None else Schedule.from_order(*moved)


def delay(schedule: Schedule, request_id: int, max_batch: int) -> Schedule | None:
    """Move a request into the next batch (opening one at the tail if needed)."""
    order, sizes = _split(schedule)
    moved = _delay_at(order, sizes, order.index(request_id), max_batch)
    return None if moved is None else Schedule.from_order(*moved)


def swap(schedule: Schedule, a: int, b: int) -> Schedule | None:
    """Exchange the position slots of two requests; batch sizes are kept."""
    order, sizes = _split(schedule)
    moved = _swap_at(order, sizes, order.index(a), order.index(b))
    return None if moved is None else Schedule.from_order(*moved)


def neighbor(schedule: Schedule, rng: random.Random, max_batch: int) -> Schedule:
    """One random squeeze/delay/swap move; returns a copy if no move applies."""
    order, sizes = _split(schedule)
    if not order:
        return schedule
    moved = _propose(order, sizes, rng, max_batch)
    if moved is None:
        return Schedule.from_order(order, sizes)
    return Schedule.from_order(*moved)


# -- search ---------------------------------------------------------------------


def _empty_result() -> EvaluatedSchedule:
    return EvaluatedSchedule(Schedule(((),)), {}, 0, 0.0, 0.0)


def anneal(
    requests: Sequence[Request],
    coeffs: LatencyCoefficients,
    classes,
    config: AnnealConfig,
    max_batch: int,
) -> EvaluatedSchedule:
    """Simulated-annealing priority mapping; returns the best schedule seen."""
    if not requests:
        return _empty_result()
    reqs = input_order(requests)
    n = len(reqs)
    tables = ScoreTables(reqs, coeffs, classes, max_batch)
    sizes0 = pack(n, max_batch)
    sorted_order = _sorted_indices(reqs, coeffs, max_batch)

    met, total = tables.score(sorted_order, sizes0)
    if met == n:
        return evaluate(tables.to_schedule(sorted_order, sizes0), coeffs, reqs, classes)

    f_sorted = met / total
    input_idx = list(range(n))
    f_input = tables.g(input_idx, sizes0)
    order, sizes, f = sorted_order, list(sizes0), f_sorted
    if f_sorted < f_input:
        order, f = input_idx, f_input

    if config.objective_scale is not None:
        scale = config.objective_scale
    else:
        # with nothing met yet, measure losses against "one request met"
        reference = f if f > 0 else 1.0 / total
        scale = config.t_thres / (LOSS_UNIT * reference)

    rng = random.Random(config.seed)
    best_order, best_sizes, best_f = order, sizes, f
    proposals = 0
    temp = config.t0
    score = tables.score
    rand = rng.random
    exp = math.exp
    while True:
        for _ in range(config.iter):
            moved = _propose(order, sizes, rng, max_batch)
            proposals += 1
            if moved is None:
                continue
            new_order, new_sizes = moved
            m, t = score(new_order, new_sizes)
            f_new = m / t
            if f_new >= f or rand() < exp(-(f - f_new) * scale / temp):
                order, sizes, f = new_order, new_sizes, f_new
                if f > best_f:
                    best_order, best_sizes, best_f = order, sizes, f
        temp *= config.tau
        if temp < config.t_thres:
            break

    result = evaluate(tables.to_schedule(best_order, best_sizes), coeffs, reqs, classes)
    result.evaluations = proposals
    return result


def exhaustive(
    requests: Sequence[Request],
    coeffs: LatencyCoefficients,
    classes,
    max_batch: int,
    n_cap: int = DEFAULT_N_CAP,
) -> EvaluatedSchedule:
    """Score every permutation x batch-size composition; return a G maximiser.

    Ties on G go to the lower latency sum, then to the lexicographically
    smaller (order, sizes) over request ids.
    """
    n = len(requests)
    if n > n_cap:
        raise SearchSpaceError(
            f"exhaustive search refused: {n} requests exceeds cap of {n_cap} "
            f"(search space grows as N! * 2^N)"
        )
    if n == 0:
        return _empty_result()
    reqs = sorted(requests, key=lambda r: r.id)
    tables = ScoreTables(reqs, coeffs, classes, max_batch)
    ex_t, base_t, lim_t = tables.exec, tables.base, tables.limit
    limit_b = min(max_batch, n)

    order: list[int] = []
    sizes: list[int] = []
    best = {"g": -1.0, "t": math.inf, "key": None}
    count = 0

    def leaf(met: int, total: float) -> None:
        nonlocal count
        count += 1
        g = met / total
        if g < best["g"]:
            return
        if g == best["g"]:
            if total > best["t"]:
                return
            if total == best["t"]:
                key = (tuple(order), tuple(sizes))
                if key >= best["key"]:
                    return
        best["g"], best["t"], best["key"] = g, total, (tuple(order), tuple(sizes))

    def rec(remaining: tuple[int, ...], wait: float, met: int, total: float) -> None:
        if not remaining:
            leaf(met, total)
            return
        for s in range(1, min(limit_b, len(remaining)) + 1):
            ex, base, lim = ex_t[s], base_t[s], lim_t[s]
            sizes.append(s)
            if s == 1:
                for j, i in enumerate(remaining):
                    e = ex[i]
                    order.append(i)
                    rec(
                        remaining[:j] + remaining[j + 1:],
                        wait + e,
                        met + (base[i] + wait <= lim[i]),
                        total + (e + wait),
                    )
                    order.pop()
            else:
                for combo in permutations(remaining, s):
                    m, tot, span = met, total, 0.0
                    for i in combo:
                        e = ex[i]
                        tot += e + wait
                        if base[i] + wait <= lim[i]:
                            m += 1
                        if e > span:
                            span = e
                    order.extend(combo)
                    rec(tuple(x for x in remaining if x not in combo), wait + span, m, tot)
                    del order[-s:]
            sizes.pop()

    rec(tuple(range(n)), 0.0, 0, 0.0)
    best_order, best_sizes = best["key"]
    result = evaluate(tables.to_schedule(best_order, best_sizes), coeffs, reqs, classes)
    result.evaluations = count
    return result
