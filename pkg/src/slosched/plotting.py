"""Static figures for the CSV files written by the experiment commands.

The report command hands a CSV here; its kind is recognised from the header
and the matching figure is written next to it as PNG.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = {
    "compare": {"policy", "g_req_per_ms", "attainment"},
    "sweep": {"t0", "iter", "best_g"},
    "perturb": {"coefficient", "factor", "degradation"},
    "lengths": {"predictor", "error_pct", "improvement_vs_fcfs"},
    "scale": {"instances", "overhead_ms", "g_realized"},
}


def detect_kind(columns: Sequence[str]) -> str:
    cols = set(columns)
    for kind, needed in KINDS.items():
        if needed <= cols:
            return kind
    raise ValueError(f"unrecognised CSV columns: {', '.join(columns)}")


def _medians(rows):
    return [r for r in rows if r.get("seed") == "median"]


def _per_seed(rows):
    return [r for r in rows if r.get("seed") != "median"]


def plot_compare(rows, ax_pair) -> None:
    data = _per_seed(rows)
    policies = list(dict.fromkeys(r["policy"] for r in data))
    for ax, key, label in zip(ax_pair, ("attainment", "g_req_per_ms"), ("SLO attainment", "G (req/ms)")):
        ax.boxplot([[r[key] for r in data if r["policy"] == p] for p in policies])
        ax.set_xticks(range(1, len(policies) + 1), policies)
        ax.set_ylabel(label)


def plot_sweep(rows, ax) -> None:
    med = _medians(rows)
    t0s = sorted({r["t0"] for r in med})
    iters = sorted({r["iter"] for r in med})
    grid = np.full((len(iters), len(t0s)), np.nan)
    for r in med:
        grid[iters.index(r["iter"]), t0s.index(r["t0"])] = r["best_g"]
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(t0s)), [f"{t:g}" for t in t0s])
    ax.set_yticks(range(len(iters)), [str(i) for i in iters])
    ax.set_xlabel("T0")
    ax.set_ylabel("iter")
    ax.figure.colorbar(im, ax=ax, label="median best G (req/ms)")


def plot_perturb(rows, ax) -> None:
    med = _medians(rows)
    labels = [f"{r['coefficient']} x{r['factor']:g}" for r in med]
    ax.bar(range(len(med)), [100 * r["degradation"] for r in med], label="median")
    ax.scatter(range(len(med)), [100 * r["max_degradation"] for r in med], color="k", marker="_", s=200, label="max")
    ax.set_xticks(range(len(med)), labels, rotation=45, ha="right")
    ax.set_ylabel("G degradation (%)")
    ax.legend()


def plot_lengths(rows, ax) -> None:
    med = [r for r in _medians(rows) if r["predictor"] != "fcfs"]
    labels = [r["predictor"] if r["predictor"] != "error" else f"error {100 * r['error_pct']:g}%" for r in med]
    ax.bar(range(len(med)), [100 * r["improvement_vs_fcfs"] for r in med])
    ax.set_xticks(range(len(med)), labels, rotation=30, ha="right")
    ax.set_ylabel("G improvement over FCFS (%)")


def plot_scale(rows, ax_pair) -> None:
    med = sorted(_medians(rows), key=lambda r: r["instances"])
    ks = [r["instances"] for r in med]
    ax_pair[0].plot(ks, [r["overhead_ms"] for r in med], "o-", label="total")
    ax_pair[0].plot(ks, [r["overhead_per_instance_ms"] for r in med], "s--", label="per instance")
    ax_pair[0].set_xlabel("instances")
    ax_pair[0].set_ylabel("scheduling overhead (ms)")
    ax_pair[0].legend()
    ax_pair[1].plot(ks, [r["g_instance_min"] for r in med], "o-", label="min per instance")
    ax_pair[1].plot(ks, [r["g_instance_max"] for r in med], "s--", label="max per instance")
    ax_pair[1].set_xlabel("instances")
    ax_pair[1].set_ylabel("predicted G (req/ms)")
    ax_pair[1].legend()


def render(kind: str, rows: list[dict], out_path: str | Path) -> Path:
    """Draw the figure for ``kind`` and save it to ``out_path``."""
    if kind in ("compare", "scale"):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        (plot_compare if kind == "compare" else plot_scale)(rows, axes)
    else:
        fig, ax = plt.subplots(figsize=(6, 4))
        {"sweep": plot_sweep, "perturb": plot_perturb, "lengths": plot_lengths}[kind](rows, ax)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)
