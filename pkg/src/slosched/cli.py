"""Command-line entry point.

    slosched fit --synth --truth table --noise 0 --out coeffs.ini
    slosched schedule --trace sample --policy sa --seed 0
    slosched compare --synth 16 --adversarial --seeds 0-19 --out cmp.csv --plot
    slosched report cmp.csv

Every flag can also come from an INI file (section ``[slosched]``, keys are
flag names without the leading dashes) named by ``--config`` or the
``SLOSCHED_CONFIG`` environment variable; command-line flags win.

Exit codes: 0 ok, 1 usage, 2 data error, 3 capacity or search-cap refusal.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from pathlib import Path
from statistics import median

import numpy as np

from . import experiments as ex
from .core import TABLE_COEFFICIENTS, WorkloadError, validate_workload
from .estimator import annotate_lengths
from .latency import FitError, ProfileSample, fit_coefficients_with_rmse, load_coefficients, save_coefficients
from .mapper import DEFAULT_N_CAP, AnnealConfig, SearchSpaceError
from .plotting import detect_kind, render
from .scheduler import POLICIES, CapacityError, default_instances, load_instances, schedule_all
from .simulator import COMPARE_COLUMNS, compare, simulate_policy
from .workload import bundled, generate_profile_samples, load_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CAPACITY = 0, 1, 2, 3
CONFIG_ENV = "SLOSCHED_CONFIG"
BUNDLED = ("sample", "adversarial", "sweep")
SAMPLE_COLUMNS = ("batch_size", "input_len", "accumulated_len", "prefill_ms", "decode_ms")
DEFAULT_B_GRID = (1, 2, 4, 8, 12, 16, 24, 32)
DEFAULT_L_GRID = (100, 250, 500, 1000, 2000, 4000, 6000, 8000)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- argument parsing ----------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def parse_seeds(text: str) -> list[int]:
    """``"0-19"``, ``"1,4,7"`` or a mix like ``"0-2,10"``."""
    seeds: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if sep and lo:
            a, b = int(lo), int(hi)
            if b < a:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with a [slosched] section")
    p.add_argument("--coeffs", help="coefficient file written by 'fit' (default: table values)")
    p.add_argument("--out", help="output file")


def _add_workload(p: argparse.ArgumentParser, trace_default: str | None = "sample", synth_n: int | None = None) -> None:
    p.add_argument("--trace", default=trace_default,
                   help="JSON-lines trace, or a bundled name: " + ", ".join(BUNDLED))
    p.add_argument("--synth", type=int, default=synth_n, metavar="N",
                   help="generate N synthetic requests per seed instead of reading a trace")
    p.add_argument("--adversarial", action="store_true",
                   help="synthetic family with tight chat TPOT and longest-first arrivals")
    p.add_argument("--lengths", choices=("gaussian", "oracle", "error"), default="gaussian",
                   help="how predicted output lengths are attached when the trace lacks them")
    p.add_argument("--error-pct", type=float, default=0.1, help="relative error for --lengths error")
    p.add_argument("--instances", help="JSON instance file (default: one 16 GiB instance)")
    p.add_argument("--max-batch", type=int, default=1)


def _add_anneal(p: argparse.ArgumentParser) -> None:
    d = AnnealConfig()
    p.add_argument("--t0", type=float, default=d.t0)
    p.add_argument("--t-thres", type=float, default=d.t_thres)
    p.add_argument("--iter", type=int, default=d.iter)
    p.add_argument("--tau", type=float, default=d.tau)
    p.add_argument("--objective-scale", type=float, default=None,
                   help="acceptance multiplier on G losses (default: derived from the start G)")
    p.add_argument("--n-cap", type=int, default=DEFAULT_N_CAP, help="largest n exhaustive search accepts")


def _add_sim(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise-pct", type=float, default=0.0, help="uniform per-request execution noise, e.g. 0.05")
    p.add_argument("--dispatch-gap-ms", type=float, default=0.1)


def _add_plot(p: argparse.ArgumentParser) -> None:
    p.add_argument("--plot", action="store_true", help="also render a PNG next to the CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slosched", description="SLO-aware batch scheduling for LLM inference.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit latency coefficients from profiling samples")
    _add_common(p)
    p.add_argument("--samples", help="CSV with columns " + ",".join(SAMPLE_COLUMNS))
    p.add_argument("--synth", action="store_true", help="generate profiling samples from --truth")
    p.add_argument("--truth", default="table", help="'table' or a coefficient file")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise std (ms) on synthetic samples")
    p.add_argument("--b-grid", type=_int_list, default=list(DEFAULT_B_GRID))
    p.add_argument("--l-grid", type=_int_list, default=list(DEFAULT_L_GRID))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("schedule", help="map priorities and print per-instance batches")
    _add_common(p)
    _add_workload(p)
    _add_anneal(p)
    p.add_argument("--policy", choices=POLICIES, default="sa")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="schedule, then replay against the synthetic backend")
    _add_common(p)
    _add_workload(p)
    _add_anneal(p)
    _add_sim(p)
    p.add_argument("--policy", choices=POLICIES, default="sa")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="policies x seeds comparison CSV")
    _add_common(p)
    _add_workload(p)
    _add_anneal(p)
    _add_sim(p)
    _add_plot(p)
    p.add_argument("--policy", default="sa,fcfs", help="comma-separated subset of " + ",".join(POLICIES))
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("0-19"))

    p = sub.add_parser("sweep", help="T0 x iter grid of best predicted G")
    _add_common(p)
    _add_workload(p, trace_default="sweep")
    _add_anneal(p)
    _add_plot(p)
    p.set_defaults(max_batch=4)
    p.add_argument("--t0-grid", type=_float_list, default=[50.0, 100.0, 200.0, 500.0])
    p.add_argument("--iter-grid", type=_int_list, default=[20, 50, 100])
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("0-9"))

    p = sub.add_parser("perturb", help="G degradation under perturbed predictor coefficients")
    _add_common(p)
    _add_workload(p, trace_default=None, synth_n=10)
    _add_anneal(p)
    _add_sim(p)
    _add_plot(p)
    # oracle lengths isolate the effect of the coefficients
    p.set_defaults(max_batch=4, lengths="oracle")
    p.add_argument("--deltas", default="alpha_p=0.5,alpha_p=1.5,delta_p=0.5,delta_p=1.5",
                   help="comma-separated name=factor; names are coefficients, groups (alpha..delta) or 'all'")
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("0-19"))

    p = sub.add_parser("lengths", help="SA under output-length predictors of varying accuracy")
    _add_common(p)
    _add_anneal(p)
    _add_sim(p)
    _add_plot(p)
    p.add_argument("--synth", type=int, default=16, metavar="N")
    p.add_argument("--adversarial", action="store_true")
    p.add_argument("--max-batch", type=int, default=1)
    p.add_argument("--error-pcts", type=_float_list, default=[0.1, 0.05, 0.025])
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("0-19"))

    p = sub.add_parser("scale", help="scheduling overhead and G across instance counts")
    _add_common(p)
    _add_workload(p, trace_default=None, synth_n=10)
    _add_anneal(p)
    _add_sim(p)
    _add_plot(p)
    p.add_argument("--instance-counts", type=_int_list, default=[1, 2, 4])
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("0-4"))

    p = sub.add_parser("report", help="summarise experiment CSVs and render their figures")
    p.add_argument("--config", help="INI file with a [slosched] section")
    p.add_argument("csv", nargs="+", help="CSV written by compare/sweep/perturb/lengths/scale")
    p.add_argument("--no-plot", action="store_true", help="print tables only")
    p.add_argument("--out-dir", help="directory for figures (default: next to each CSV)")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def apply_config(sub: argparse.ArgumentParser, path: str) -> None:
    """Use values from the INI file as defaults of ``sub``."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    if not cp.has_section("slosched"):
        return
    section = cp["slosched"]
    actions = {a.dest: a for a in sub._actions}
    values = {}
    for key in section:
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            continue
        if isinstance(action, argparse._StoreTrueAction):
            values[dest] = section.getboolean(key)
        else:
            # string defaults are run through the action's type by argparse
            values[dest] = section[key]
    sub.set_defaults(**values)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    config = known.config or os.environ.get(CONFIG_ENV)
    if config and known.command in COMMANDS:
        apply_config(_subparser(parser, known.command), config)
    return parser.parse_args(argv)


# -- inputs -----------------------------------------------------------------------


def _coeffs(args):
    return load_coefficients(args.coeffs) if getattr(args, "coeffs", None) else TABLE_COEFFICIENTS


def _instances(args):
    if args.instances:
        return load_instances(args.instances)
    return default_instances(1, args.max_batch)


def _config(args, seed: int = 0) -> AnnealConfig:
    return AnnealConfig(args.t0, args.t_thres, args.iter, args.tau, seed, args.objective_scale)


def _trace_path(name: str) -> Path:
    if name in BUNDLED and not Path(name).exists():
        return bundled(name)
    return Path(name)


def workload_source(args):
    """Seed -> workload carrying predicted output lengths."""
    if args.synth:
        return ex.synthetic_source(args.synth, args.lengths, args.error_pct, args.adversarial)
    if not args.trace:
        raise UsageError("need --trace or --synth")
    return ex.trace_source(load_trace(_trace_path(args.trace)), args.lengths, args.error_pct)


def load_samples(path: str) -> list[ProfileSample]:
    samples = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SAMPLE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise WorkloadError(f"{path}: missing columns {', '.join(sorted(missing))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                samples.append(ProfileSample(int(row["batch_size"]), int(row["input_len"]),
                                             int(row["accumulated_len"]), float(row["prefill_ms"]),
                                             float(row["decode_ms"])))
            except ValueError as exc:
                raise WorkloadError(f"{path}:{lineno}: {exc}") from exc
    return samples


# -- commands -------------------------------------------------------------------------


def cmd_fit(args) -> int:
    if args.samples and args.synth:
        raise UsageError("give either --samples or --synth, not both")
    if args.samples:
        samples = load_samples(args.samples)
    elif args.synth:
        truth = TABLE_COEFFICIENTS if args.truth == "table" else load_coefficients(args.truth)
        samples = generate_profile_samples(truth, args.b_grid, args.l_grid, args.noise, args.seed)
    else:
        raise UsageError("need --samples PATH or --synth")
    coeffs, rmse_p, rmse_d = fit_coefficients_with_rmse(samples)
    out = args.out or "coefficients.ini"
    save_coefficients(coeffs, out)
    print(f"samples: {len(samples)}")
    for k, v in coeffs.to_dict().items():
        print(f"{k:8s} {v:.10g}")
    print(f"rmse prefill_ms: {rmse_p:.6g}")
    print(f"rmse decode_ms:  {rmse_d:.6g}")
    print(f"wrote {out}")
    return EXIT_OK


def _schedule_payload(result, wl) -> dict:
    lanes = []
    for inst_id, ev in zip([q.instance_id for q in result.queues], result.per_instance):
        lanes.append({
            "instance": inst_id,
            "batches": [list(b) for b in ev.schedule.lanes[0]],
            "predicted": {"n_met": ev.n, "sum_e2e_ms": ev.t_ms, "g_req_per_ms": ev.g,
                          "attainment": ev.attainment, "avg_latency_ms": ev.avg_latency_ms,
                          "proposals": ev.evaluations},
        })
    met = sum(ev.n for ev in result.per_instance)
    total = sum(ev.t_ms for ev in result.per_instance)
    return {
        "n_requests": len(wl.requests),
        "instances": lanes,
        "g_req_per_ms": met / total if total > 0 else 0.0,
        "memory_epochs": result.epochs,
        "overhead_ms": result.overhead_ms,
    }


def cmd_schedule(args) -> int:
    wl = workload_source(args)(args.seed)
    result = schedule_all(wl.requests, _instances(args), _coeffs(args), wl.classes, _config(args, args.seed),
                          args.max_batch, args.policy, args.n_cap)
    payload = _schedule_payload(result, wl)
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    wl = workload_source(args)(args.seed)
    sim, predicted = simulate_policy(args.policy, wl, _instances(args), _coeffs(args), _config(args, args.seed),
                                     args.max_batch, args.noise_pct, args.dispatch_gap_ms, n_cap=args.n_cap)
    payload = sim.report.to_dict(include_requests=bool(args.out))
    payload["predicted_g_req_per_ms"] = predicted
    payload["schedule"] = sim.schedule.to_dict() if sim.schedule else None
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    summary = {k: v for k, v in payload.items() if k not in ("requests", "schedule")}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _finish_csv(args, rows, columns, kind: str) -> int:
    out = args.out or f"{kind}.csv"
    ex.write_csv(out, rows, columns)
    print_table(kind, [r for r in rows if r.get("seed") == "median"], columns)
    print(f"wrote {out}")
    if getattr(args, "plot", False):
        print(f"wrote {render(kind, ex.read_csv(out)[1], Path(out).with_suffix('.png'))}")
    return EXIT_OK


def cmd_compare(args) -> int:
    policies = [p.strip() for p in args.policy.split(",") if p.strip()]
    bad = [p for p in policies if p not in POLICIES]
    if bad or not policies:
        raise UsageError(f"unknown policy {', '.join(bad) or '(none)'}")
    rows = compare(workload_source(args), _instances(args), _coeffs(args), policies, args.seeds,
                   _config(args), args.max_batch, args.noise_pct, args.dispatch_gap_ms, args.n_cap)
    return _finish_csv(args, [r.as_csv() for r in rows], COMPARE_COLUMNS, "compare")


def cmd_sweep(args) -> int:
    if not args.t0_grid or not args.iter_grid:
        raise UsageError("sweep grid must be non-empty")
    rows = ex.sweep(workload_source(args), _coeffs(args), args.t0_grid, args.iter_grid, args.seeds,
                    args.max_batch, _config(args))
    return _finish_csv(args, rows, ex.SWEEP_COLUMNS, "sweep")


def cmd_perturb(args) -> int:
    rows = ex.perturb(workload_source(args), _coeffs(args), ex.parse_deltas(args.deltas), args.seeds,
                      _instances(args), args.max_batch, _config(args), args.dispatch_gap_ms)
    return _finish_csv(args, rows, ex.PERTURB_COLUMNS, "perturb")


def cmd_lengths(args) -> int:
    rows = ex.length_accuracy(args.synth, _coeffs(args), args.error_pcts, args.seeds, args.max_batch,
                              _config(args), args.dispatch_gap_ms, args.adversarial)
    return _finish_csv(args, rows, ex.LENGTH_COLUMNS, "lengths")


def cmd_scale(args) -> int:
    if not args.instance_counts or min(args.instance_counts) < 1:
        raise UsageError("instance counts must be positive")
    rows = ex.scaling(workload_source(args), _coeffs(args), args.instance_counts, args.seeds, args.max_batch,
                      _config(args), args.dispatch_gap_ms)
    return _finish_csv(args, rows, ex.SCALE_COLUMNS, "scale")


def cmd_report(args) -> int:
    for path in args.csv:
        columns, rows = ex.read_csv(path)
        kind = detect_kind(columns)
        print(f"== {path} ({kind}, {sum(r.get('seed') != 'median' for r in rows)} data rows)")
        med = [r for r in rows if r.get("seed") == "median"]
        if kind == "compare":
            print_table1(med)
        else:
            print_table(kind, med, columns)
        if not args.no_plot:
            target = Path(path).with_suffix(".png")
            if args.out_dir:
                Path(args.out_dir).mkdir(parents=True, exist_ok=True)
                target = Path(args.out_dir) / target.name
            print(f"wrote {render(kind, rows, target)}")
    return EXIT_OK


# -- tables ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def print_table(kind: str, rows, columns) -> None:
    cols = [c for c in columns if c != "seed"]
    cells = [[_cell(r.get(c, "")) for c in cols] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    print(f"{kind} medians:")
    print("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def print_table1(rows) -> None:
    """Median rows in the units of the published comparison table."""
    print(f"{'policy':>10}  {'SLO attain.':>11}  {'latency (s)':>11}  {'G (x1e-5)':>9}  {'overhead (s)':>12}")
    for r in rows:
        print(f"{r['policy']:>10}  {r['attainment']:>11.3f}  {r['avg_latency_ms'] / 1000:>11.2f}  "
              f"{r['g_req_per_ms'] * 1e5:>9.2f}  {r['overhead_ms'] / 1000:>12.5f}")


COMMANDS = {
    "fit": cmd_fit,
    "schedule": cmd_schedule,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "perturb": cmd_perturb,
    "lengths": cmd_lengths,
    "scale": cmd_scale,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"slosched: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CapacityError, SearchSpaceError) as exc:
        print(f"slosched: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (WorkloadError, FitError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"slosched: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
