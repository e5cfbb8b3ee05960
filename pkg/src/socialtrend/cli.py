"""Command-line entry point: ``socialtrend {simulate,rates,verify,sweep}``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import checks
from .config import (ConfigError, apply_overrides, bundled_config_path, bundled_configs,
                     build_config, load_raw)
from .engine import (EngineError, mislearning_guard, protocol_label, run_experiment, summarize,
                     write_plot_data, write_summary, write_trace_csv)
from .models import InfiniteKLError, ModelError, check_global_identifiability
from .network import NetworkError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def resolve_config(name: str) -> Path:
    """A file path, or the name of a bundled config such as ``fig3``."""
    path = Path(name)
    if path.is_file():
        return path
    bundled = bundled_config_path(Path(name).name)
    if bundled.is_file():
        return bundled
    return path


def _load(args, extra: dict | None = None):
    path = resolve_config(args.config)
    raw = load_raw(path)
    overrides = {f"experiment.{k}": getattr(args, k, None)
                 for k in ("seed", "horizon", "stride", "runs")}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    overrides.update(extra or {})
    return build_config(apply_overrides(raw, overrides), source=str(path))


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    config = _load(args)
    out = _outdir(args.out or Path("out") / config.name)
    try:
        traces = run_experiment(config, workers=args.workers)
    except EngineError as exc:
        if exc.partial is not None:
            write_trace_csv(exc.partial, out / "trace_partial.csv")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    multi = len(traces) > 1
    for tr in traces:
        write_trace_csv(tr, out / (f"trace_run{tr.run:03d}.csv" if multi else "trace.csv"))
    write_summary(summarize(config, traces), out / "summary.json")
    write_plot_data(config, traces[0], out)
    print(f"{config.name}: {protocol_label(config.protocol)}, {config.num_agents} agents, "
          f"{config.num_hypotheses} hypotheses, horizon {config.horizon}, seed {config.seed}")
    for tr in traces:
        truth_beliefs = np.exp(tr.final[:, config.truth])
        guard = mislearning_guard(tr)
        prefix = f"run {tr.run}: " if multi else ""
        print(f"{prefix}final truth-beliefs: " + " ".join(f"{b:.4f}" for b in truth_beliefs))
        print(f"{prefix}guard minimum: {guard.min_truth_belief:.6g} "
              f"(agent {guard.agent}, time {guard.time})")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_rates(args) -> int:
    config = _load(args)
    v = config.matrix.perron
    truth = config.truth
    D = config.model.kl_matrix(truth)
    ident = {i.theta: i for i in check_global_identifiability(config.model, truth)}
    rows = []
    print(f"{config.name}: truth {truth}, Perron vector " + " ".join(f"{x:.4f}" for x in v))
    print(f"{'theta':>5} {'d_ave':>12}  witnesses")
    for h in range(config.num_hypotheses):
        if h == truth:
            continue
        contrib = v * D[:, h]
        d = -float(contrib.sum())
        wit = list(ident[h].witnesses)
        flag = "" if ident[h].identifiable else "  UNIDENTIFIABLE"
        print(f"{h:>5} {d:>12.6f}  {wit}{flag}")
        rows.append({"theta": h, "d_ave": d, "kl": D[:, h].tolist(),
                     "weighted_kl": contrib.tolist(), "witnesses": wit,
                     "identifiable": ident[h].identifiable})
    print("per-agent KL contributions v_k * KL_k(truth || theta):")
    for k in range(config.num_agents):
        print(f"  agent {k}: " + " ".join(f"{r['weighted_kl'][k]:.5f}" for r in rows))
    unidentifiable = [r["theta"] for r in rows if not r["identifiable"]]
    if unidentifiable:
        print(f"warning: hypotheses {unidentifiable} are not identifiable from the truth",
              file=sys.stderr)
    out = _outdir(args.out or Path("out") / config.name)
    (out / "rates.json").write_text(json.dumps(
        {"name": config.name, "truth": truth, "perron": np.asarray(v).tolist(), "rates": rows},
        indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'rates.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.checks or ["all"]
    unknown = [n for n in names if n != "all" and n not in checks.BATTERY]
    if unknown:
        print(f"error: unknown checks {', '.join(unknown)}; available: all, "
              + ", ".join(checks.BATTERY), file=sys.stderr)
        return EXIT_USAGE
    reports = checks.run_battery(names, seed=args.seed)
    out = _outdir(args.out or Path("out") / "verify")
    (out / "reports.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    lines = [r.line() for r in reports]
    failed = sum(not r.passed for r in reports)
    lines.append(f"{len(reports) - failed}/{len(reports)} checks passed (seed {args.seed})")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if failed == 0 else EXIT_FAILED


def parse_param(spec: str) -> tuple[str, list]:
    """``key=v1,v2`` with ``key`` dotted (default section ``experiment``)."""
    if "=" not in spec:
        raise argparse.ArgumentTypeError(f"expected key=v1,v2,..., got {spec!r}")
    key, values = spec.split("=", 1)
    key = key if "." in key else f"experiment.{key}"
    parsed = []
    for v in values.split(","):
        try:
            parsed.append(json.loads(v))
        except json.JSONDecodeError:
            parsed.append(v)
    return key, parsed


def cmd_sweep(args) -> int:
    if not args.param:
        print("error: sweep needs at least one --param", file=sys.stderr)
        return EXIT_USAGE
    grid = dict(args.param)
    keys = list(grid)
    base = _load(args)
    out = _outdir(args.out or Path("out") / f"{base.name}_sweep")
    rows, status = [], EXIT_OK
    for i, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        point = dict(zip(keys, values))
        label = " ".join(f"{k}={v}" for k, v in point.items())
        try:
            config = _load(args, point)
            traces = run_experiment(config, workers=args.workers)
        except (ConfigError, EngineError) as exc:
            print(f"[{i}] {label}: error: {exc}", file=sys.stderr)
            status = EXIT_FAILED
            continue
        summary = summarize(config, traces)
        point_dir = _outdir(out / f"point_{i:03d}")
        write_summary(summary, point_dir / "summary.json")
        write_trace_csv(traces[0], point_dir / "trace.csv")
        truth_min = min(min(r["final_truth_beliefs"]) for r in summary["runs"])
        guard_min = min(r["guard"]["min_truth_belief"] for r in summary["runs"])
        rows.append([i] + [json.dumps(v) for v in values] + [repr(truth_min), repr(guard_min)])
        print(f"[{i}] {label}: min final truth-belief {truth_min:.4f}, guard minimum {guard_min:.4g}")
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point"] + keys + ["min_final_truth_belief", "guard_minimum"])
        w.writerows(rows)
    print(f"wrote {out}")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socialtrend", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p):
        p.add_argument("config", help="config file, or a bundled name: " + ", ".join(bundled_configs()))
        p.add_argument("--out", help="output directory (created if absent)")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--stride", type=int)
        p.add_argument("--workers", type=int, default=1, help="parallel processes for multiple runs")

    p = sub.add_parser("simulate", help="run a config and write trace, summary and plot data")
    experiment_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="asymptotic rates, KL contributions and identifiability")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("verify", help="run the verification battery")
    p.add_argument("checks", nargs="*", metavar="check",
                   help="check names or 'all'; available: " + ", ".join(checks.BATTERY))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="simulate over a parameter grid")
    experiment_args(p)
    p.add_argument("--param", action="append", type=parse_param, default=[],
                   help="key=v1,v2,... (dotted keys; bare keys live in [experiment])")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config {exc.source}:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkError, ModelError, InfiniteKLError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
