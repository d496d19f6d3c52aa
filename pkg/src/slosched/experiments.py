"""Experiment drivers behind the CLI: annealing sweeps, coefficient
perturbation, output-length accuracy and multi-instance scaling.

Each driver returns flat row dicts (ready for CSV) with per-seed rows first
and ``seed == "median"`` summary rows last.
"""

from __future__ import annotations

import csv
from pathlib import Path
from statistics import median
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import InstanceState, LatencyCoefficients, Request, Workload, validate_workload
from .estimator import annotate_lengths
from .mapper import AnnealConfig, anneal, initial_candidates
from .objective import evaluate
from .scheduler import DEFAULT_DISPATCH_GAP_MS, default_instances, schedule_all
from .simulator import run, run_fcfs, simulate_policy
from .workload import default_slo_classes, generate_adversarial, generate_mixed

SWEEP_COLUMNS = ("t0", "iter", "seed", "best_g", "start_g", "improvement")
PERTURB_COLUMNS = ("coefficient", "factor", "seed", "g_reference", "g_perturbed", "degradation", "max_degradation")
LENGTH_COLUMNS = ("predictor", "error_pct", "seed", "attainment", "avg_latency_ms", "g_req_per_ms", "improvement_vs_fcfs")
SCALE_COLUMNS = ("instances", "seed", "n_requests", "overhead_ms", "overhead_per_instance_ms",
                 "g_instance_min", "g_instance_max", "g_realized")

COEFFICIENT_GROUPS = {
    "alpha": ("alpha_p", "alpha_d"),
    "beta": ("beta_p", "beta_d"),
    "gamma": ("gamma_p", "gamma_d"),
    "delta": ("delta_p", "delta_d"),
}


def with_config_seed(config: AnnealConfig, seed: int, **changes) -> AnnealConfig:
    fields = dict(t0=config.t0, t_thres=config.t_thres, iter=config.iter, tau=config.tau,
                  seed=seed, objective_scale=config.objective_scale)
    fields.update(changes)
    return AnnealConfig(**fields)


def synthetic_source(
    n: int,
    lengths: str = "gaussian",
    error_pct: float = 0.0,
    adversarial: bool = False,
) -> Callable[[int], Workload]:
    """Seed -> workload with predicted lengths attached."""

    def make(seed: int) -> Workload:
        if adversarial:
            classes, reqs = generate_adversarial(n, seed)
        else:
            classes = default_slo_classes()
            reqs = generate_mixed(n, seed, *classes)
        reqs, _ = annotate_lengths(reqs, classes, lengths, np.random.default_rng(seed), error_pct)
        return validate_workload(reqs, classes)

    return make


def trace_source(workload: Workload, lengths: str = "gaussian", error_pct: float = 0.0) -> Callable[[int], Workload]:
    """Seed -> the fixed trace with freshly drawn predicted lengths.

    Predicted lengths already present in the trace are kept.
    """

    def make(seed: int) -> Workload:
        if all(r.predicted_output_len is not None for r in workload.requests):
            return workload
        reqs, _ = annotate_lengths(workload.requests, workload.classes, lengths, np.random.default_rng(seed), error_pct)
        return validate_workload(reqs, workload.classes)

    return make


def _medians(rows: list[dict], keys: Sequence[str], values: Sequence[str]) -> list[dict]:
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for cell, members in cells.items():
        summary = dict(zip(keys, cell))
        summary["seed"] = "median"
        for v in values:
            summary[v] = median(m[v] for m in members)
        out.append(summary)
    return out


def sweep(
    source: Callable[[int], Workload],
    coeffs: LatencyCoefficients,
    t0s: Sequence[float],
    iters: Sequence[int],
    seeds: Sequence[int],
    max_batch: int = 1,
    base: AnnealConfig = AnnealConfig(),
) -> list[dict]:
    """Best predicted G for every (t0, iter, seed) cell.

    ``start_g`` is the better of the two starting candidates, so
    ``improvement`` is what the annealing itself contributed.
    """
    if not t0s or not iters:
        raise ValueError("sweep grid must be non-empty")
    rows = []
    for t0 in t0s:
        for it in iters:
            for seed in seeds:
                wl = source(seed)
                cfg = with_config_seed(base, seed, t0=float(t0), iter=int(it))
                ev = anneal(wl.requests, coeffs, wl.classes, cfg, max_batch)
                start_g = max(evaluate(s, coeffs, wl.requests, wl.classes).g
                              for s in initial_candidates(wl.requests, coeffs, max_batch))
                rows.append({
                    "t0": float(t0),
                    "iter": int(it),
                    "seed": seed,
                    "best_g": ev.g,
                    "start_g": start_g,
                    "improvement": ev.g / start_g - 1.0 if start_g > 0 else float("nan"),
                })
    return rows + _medians(rows, ("t0", "iter"), ("best_g", "start_g", "improvement"))


def parse_deltas(spec: str) -> list[tuple[str, float]]:
    """``"alpha_p=0.5,alpha_p=1.5,delta=0.9"`` -> [(name, factor), ...]."""
    out = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, factor = part.partition("=")
        name = name.strip()
        if name not in LatencyCoefficients.KEYS and name not in COEFFICIENT_GROUPS and name != "all":
            raise ValueError(f"unknown coefficient {name!r}")
        out.append((name, float(factor)))
    if not out:
        raise ValueError("no perturbations given")
    return out


def perturbed(coeffs: LatencyCoefficients, name: str, factor: float) -> LatencyCoefficients:
    if name == "all":
        keys: Iterable[str] = LatencyCoefficients.KEYS
    else:
        keys = COEFFICIENT_GROUPS.get(name, (name,))
    return coeffs.scaled({k: factor for k in keys})


def perturb(
    source: Callable[[int], Workload],
    coeffs: LatencyCoefficients,
    deltas: Sequence[tuple[str, float]],
    seeds: Sequence[int],
    instances: Sequence[InstanceState] | None = None,
    max_batch: int = 4,
    base: AnnealConfig = AnnealConfig(),
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
) -> list[dict]:
    """Schedule with perturbed predictor coefficients, replay with the true ones.

    Degradation is the relative loss of realized G against scheduling with
    the true coefficients (same seed, same workload).
    """
    instances = instances or default_instances(1, max_batch)
    rows = []
    reference: dict[int, float] = {}
    for seed in seeds:
        wl = source(seed)
        cfg = with_config_seed(base, seed)
        sim, _ = simulate_policy("sa", wl, instances, coeffs, cfg, max_batch, 0.0, dispatch_gap_ms)
        reference[seed] = sim.report.g
        for name, factor in deltas:
            sim_p, _ = simulate_policy("sa", wl, instances, coeffs, cfg, max_batch, 0.0, dispatch_gap_ms,
                                       predictor_coeffs=perturbed(coeffs, name, factor))
            g_ref = reference[seed]
            rows.append({
                "coefficient": name,
                "factor": factor,
                "seed": seed,
                "g_reference": g_ref,
                "g_perturbed": sim_p.report.g,
                "degradation": 1.0 - sim_p.report.g / g_ref if g_ref > 0 else 0.0,
            })
    summary = _medians(rows, ("coefficient", "factor"), ("g_reference", "g_perturbed", "degradation"))
    for s in summary:
        s["max_degradation"] = max(r["degradation"] for r in rows
                                   if r["coefficient"] == s["coefficient"] and r["factor"] == s["factor"])
    for r in rows:
        r["max_degradation"] = ""
    return rows + summary


def length_accuracy(
    n: int,
    coeffs: LatencyCoefficients,
    error_pcts: Sequence[float],
    seeds: Sequence[int],
    max_batch: int = 1,
    base: AnnealConfig = AnnealConfig(),
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
    adversarial: bool = False,
) -> list[dict]:
    """Realized G of SA under predictors of varying accuracy, against FCFS."""
    instances = default_instances(1, max_batch)
    predictors = [("gaussian", 0.0)] + [("error", float(p)) for p in error_pcts] + [("oracle", 0.0)]
    rows = []
    for seed in seeds:
        truth = synthetic_source(n, "oracle", adversarial=adversarial)(seed)
        fcfs = run_fcfs(truth.requests, instances, truth.classes, coeffs, max_batch, 0.0, seed, dispatch_gap_ms).report
        rows.append(_length_row("fcfs", 0.0, seed, fcfs, fcfs.g))
        for mode, pct in predictors:
            wl = synthetic_source(n, mode, pct, adversarial)(seed)
            sim, _ = simulate_policy("sa", wl, instances, coeffs, with_config_seed(base, seed), max_batch,
                                     0.0, dispatch_gap_ms)
            rows.append(_length_row(mode, pct, seed, sim.report, fcfs.g))
    return rows + _medians(rows, ("predictor", "error_pct"),
                           ("attainment", "avg_latency_ms", "g_req_per_ms", "improvement_vs_fcfs"))


def _length_row(mode, pct, seed, report, g_fcfs) -> dict:
    return {
        "predictor": mode,
        "error_pct": pct,
        "seed": seed,
        "attainment": report.slo_attainment,
        "avg_latency_ms": report.avg_latency_ms,
        "g_req_per_ms": report.g,
        "improvement_vs_fcfs": report.g / g_fcfs - 1.0 if g_fcfs > 0 else float("nan"),
    }


def replicate(requests: Sequence[Request], copies: int) -> list[Request]:
    """``copies`` clones of a request set with disjoint ids, same arrival order."""
    step = max((r.id for r in requests), default=-1) + 1
    out = []
    for c in range(copies):
        for r in requests:
            out.append(Request(r.id + c * step, r.task_class_id, r.input_len, r.true_output_len,
                               r.predicted_output_len, r.arrival_time_ms))
    return out


def scaling(
    source: Callable[[int], Workload],
    coeffs: LatencyCoefficients,
    instance_counts: Sequence[int],
    seeds: Sequence[int],
    max_batch: int = 1,
    base: AnnealConfig = AnnealConfig(),
    dispatch_gap_ms: float = DEFAULT_DISPATCH_GAP_MS,
) -> list[dict]:
    """Replicate one workload across k identical instances and time scheduling."""
    rows = []
    for seed in seeds:
        wl = source(seed)
        for k in instance_counts:
            reqs = replicate(wl.requests, k)
            instances = default_instances(k, max_batch)
            cfg = with_config_seed(base, seed)
            result = schedule_all(reqs, instances, coeffs, wl.classes, cfg, max_batch)
            sim = run(result.schedule, reqs, wl.classes, coeffs, 0.0, seed, dispatch_gap_ms,
                      result.overhead_ms, instances)
            gs = [ev.g for ev in result.per_instance]
            rows.append({
                "instances": k,
                "seed": seed,
                "n_requests": len(reqs),
                "overhead_ms": result.overhead_ms,
                "overhead_per_instance_ms": result.overhead_ms / k,
                "g_instance_min": min(gs),
                "g_instance_max": max(gs),
                "g_realized": sim.report.g,
            })
    return rows + _medians(rows, ("instances",), SCALE_COLUMNS[2:])


# -- CSV ------------------------------------------------------------------------------


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})


def _fmt(value):
    return repr(value) if isinstance(value, float) else value


def _parse(value: str):
    if value == "":
        return ""
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [{k: _parse(v) for k, v in row.items()} for row in reader]
        return list(reader.fieldnames or []), rows
