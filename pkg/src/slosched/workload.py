"""Request traces, synthetic two-class workloads and profiling samples."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    GaussianPrior,
    LatencyCoefficients,
    Request,
    SloKind,
    SloSpec,
    TaskClass,
    Workload,
    WorkloadError,
    validate_workload,
)
from .latency import ProfileSample, predict_per_token_decode, predict_prefill

MAX_LEN = 2047


@dataclass(frozen=True)
class LengthDist:
    """Lognormal input lengths (by median) and Gaussian output lengths."""

    input_median: float
    input_sigma: float
    output_mean: float
    output_std: float


CODE_LENGTHS = LengthDist(input_median=300, input_sigma=0.6, output_mean=900, output_std=300)
CHAT_LENGTHS = LengthDist(input_median=200, input_sigma=0.8, output_mean=250, output_std=150)


def default_slo_classes() -> tuple[TaskClass, TaskClass]:
    code = TaskClass(
        0,
        "code",
        SloSpec(SloKind.E2E, e2e_ms=30_000.0),
        GaussianPrior(CODE_LENGTHS.output_mean, CODE_LENGTHS.output_std),
    )
    chat = TaskClass(
        1,
        "chat",
        SloSpec(SloKind.TTFT_TPOT, ttft_ms=10_000.0, tpot_ms=50.0),
        GaussianPrior(CHAT_LENGTHS.output_mean, CHAT_LENGTHS.output_std),
    )
    return code, chat


def _draw_lengths(rng: np.random.Generator, dist: LengthDist, count: int) -> tuple[np.ndarray, np.ndarray]:
    inputs = rng.lognormal(np.log(dist.input_median), dist.input_sigma, size=count)
    outputs = rng.normal(dist.output_mean, dist.output_std, size=count)
    clip = lambda a: np.clip(np.rint(a), 1, MAX_LEN).astype(int)  # noqa: E731
    return clip(inputs), clip(outputs)


def generate_mixed(
    n: int,
    seed: int,
    code_class: TaskClass | None = None,
    chat_class: TaskClass | None = None,
    length_dists: tuple[LengthDist, LengthDist] = (CODE_LENGTHS, CHAT_LENGTHS),
) -> list[Request]:
    """Half code, half chat requests (code gets the odd one), shuffled by seed."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if code_class is None or chat_class is None:
        code_default, chat_default = default_slo_classes()
        code_class = code_class or code_default
        chat_class = chat_class or chat_default
    rng = np.random.default_rng(seed)
    n_code = (n + 1) // 2
    n_chat = n // 2
    code_in, code_out = _draw_lengths(rng, length_dists[0], n_code)
    chat_in, chat_out = _draw_lengths(rng, length_dists[1], n_chat)
    rows = [(code_class.id, int(i), int(o)) for i, o in zip(code_in, code_out)]
    rows += [(chat_class.id, int(i), int(o)) for i, o in zip(chat_in, chat_out)]
    perm = rng.permutation(len(rows))
    return [
        Request(id=k, task_class_id=rows[p][0], input_len=rows[p][1], true_output_len=rows[p][2], arrival_time_ms=0.0)
        for k, p in enumerate(perm)
    ]


def adversarial_classes() -> tuple[TaskClass, TaskClass]:
    """Code class as usual; chat class with a TPOT target only met at small batch sizes."""
    code, _ = default_slo_classes()
    chat = TaskClass(
        1,
        "chat",
        SloSpec(SloKind.TTFT_TPOT, ttft_ms=10_000.0, tpot_ms=17.0),
        GaussianPrior(CHAT_LENGTHS.output_mean, CHAT_LENGTHS.output_std),
    )
    return code, chat


def generate_adversarial(n: int, seed: int) -> tuple[tuple[TaskClass, TaskClass], list[Request]]:
    """Mixed workload whose arrival order is longest-first.

    Long code jobs sit ahead of short chat jobs with tight TTFT/TPOT targets,
    so serving in arrival order starves the chats.
    """
    classes = adversarial_classes()
    reqs = generate_mixed(n, seed, *classes)
    reqs.sort(key=lambda r: (-(r.input_len + r.true_output_len), r.id))
    out = [
        Request(k, r.task_class_id, r.input_len, r.true_output_len, None, float(k))
        for k, r in enumerate(reqs)
    ]
    return classes, out


def generate_profile_samples(
    coeffs_truth: LatencyCoefficients,
    b_values: Sequence[int],
    l_values: Sequence[int],
    noise_std_ms: float,
    seed: int,
) -> list[ProfileSample]:
    if not b_values or not l_values:
        raise ValueError("profiling grids must be non-empty")
    rng = np.random.default_rng(seed)
    samples = []
    for b in b_values:
        for length in l_values:
            prefill = predict_prefill(coeffs_truth, b, length)
            decode = predict_per_token_decode(coeffs_truth, b, length)
            if noise_std_ms > 0:
                prefill += rng.normal(0.0, noise_std_ms)
                decode += rng.normal(0.0, noise_std_ms)
            samples.append(ProfileSample(int(b), int(length), int(length), float(prefill), float(decode)))
    return samples


# -- trace files -----------------------------------------------------------------


def _record_to_request(rec: dict, class_ids: dict[str, int]) -> Request:
    task = rec["task"]
    if task not in class_ids:
        raise WorkloadError(f"task {task!r} not declared in a header record")
    predicted = rec.get("predicted_len")
    return Request(
        id=int(rec["id"]),
        task_class_id=class_ids[task],
        input_len=int(rec["input_len"]),
        true_output_len=int(rec["output_len"]),
        predicted_output_len=None if predicted is None else int(predicted),
        arrival_time_ms=float(rec.get("arrival_ms", 0.0)),
    )


def load_trace(path: str | Path) -> Workload:
    """Read a JSON-lines trace: class header records, then one request per line."""
    classes: list[TaskClass] = []
    class_ids: dict[str, int] = {}
    requests: list[Request] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise WorkloadError("record is not an object")
                if "slo_kind" in rec:
                    tc = TaskClass.from_dict(rec, len(classes))
                    if tc.name in class_ids:
                        raise WorkloadError(f"task class {tc.name!r} declared twice")
                    class_ids[tc.name] = tc.id
                    classes.append(tc)
                else:
                    req = _record_to_request(rec, class_ids)
                    if req.input_len < 1 or req.true_output_len < 1:
                        raise WorkloadError("non-positive length")
                    requests.append(req)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise WorkloadError(f"{path}:{lineno}: {exc}") from exc
    return validate_workload(requests, classes)


def trace_records(classes: Iterable[TaskClass], requests: Iterable[Request]) -> list[dict]:
    classes = list(classes)
    names = {c.id: c.name for c in classes}
    records = [c.to_dict() for c in classes]
    for r in requests:
        rec = {
            "id": r.id,
            "task": names[r.task_class_id],
            "input_len": r.input_len,
            "output_len": r.true_output_len,
            "arrival_ms": r.arrival_time_ms,
        }
        if r.predicted_output_len is not None:
            rec["predicted_len"] = r.predicted_output_len
        records.append(rec)
    return records


def save_trace(path: str | Path, classes: Iterable[TaskClass], requests: Iterable[Request]) -> None:
    with open(path, "w") as fh:
        for rec in trace_records(classes, requests):
            fh.write(json.dumps(rec) + "\n")


def bundled(name: str) -> Path:
    """Path of a trace shipped with the package (``sample``, ``adversarial``, ``sweep``)."""
    files = {"sample": "sample_trace.jsonl", "adversarial": "adversarial.jsonl", "sweep": "sweep_fixture.jsonl"}
    return Path(str(resources.files("slosched") / "data" / files.get(name, name)))
