"""``boexplore`` command line.

Exit codes: 0 success, 1 invariant violation, 2 input error, 3 unsupported
configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, harness, metrics
from .benchmarks import make_rng
from .errors import BOExploreError, ConfigError, InputError, TraceParseError

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_UNSUPPORTED = 3


class Unsupported(BOExploreError):
    pass


def _err(msg):
    print(f"boexplore: {msg}", file=sys.stderr)


# --- run ----------------------------------------------------------------------------

def cmd_run(args):
    cfg = harness.load_config(args.config, output_dir=args.out, workers=args.workers)
    if cfg.output_dir is None:
        cfg.output_dir = "runs"

    def report(rec):
        m = rec.meta
        best = float(np.max(rec.trace.values))
        print(f"{m['benchmark']} {m['af']} {m['variant']} seed={m['seed']} "
              f"evals={len(rec.trace)} best={best:.6g} fit_failures={rec.fit_failures} "
              f"-> {rec.path}")

    harness.run_experiment(cfg, progress=report)
    return EXIT_OK


# --- metrics ------------------------------------------------------------------------

_KIND = {"otsd": "OTSD", "otsd-norm": "OTSD_NORM", "oe": "OE"}


def _series_for(trace, kind):
    if kind == "otsd":
        return metrics.otsd_series(trace)
    if kind == "otsd-norm":
        if trace.dim < 2:
            raise Unsupported(f"normalized OTSD is undefined for d = {trace.dim} (needs d >= 2)")
        return metrics.otsd_normalized(trace)
    if trace.dim > metrics.OE_MAX_DIM:
        raise Unsupported(f"OE is limited to d <= {metrics.OE_MAX_DIM}, trace has d = {trace.dim}")
    return metrics.oe_series(trace)


def cmd_metrics(args):
    paths = [Path(p) for p in args.traces]
    out = Path(args.out) if args.out else None
    single_file = out is not None and len(paths) == 1 and out.suffix == ".csv"
    traces = [(p, harness.read_trace(p)) for p in paths]
    for p, trace in traces:
        series = _series_for(trace, args.kind)
        if single_file:
            dest = out
        else:
            folder = out if out is not None else p.parent
            dest = folder / f"{p.stem}.{args.kind}.csv"
        dest.parent.mkdir(parents=True, exist_ok=True)
        metrics.write_series_csv(series, dest)
        print(f"{p} -> {dest} ({len(series)} rows)")
    return EXIT_OK


# --- analyze ------------------------------------------------------------------------

def _load_dir(path):
    folder = Path(path)
    if not folder.is_dir():
        raise InputError(f"{folder} is not a directory")
    files = sorted(folder.glob("*.jsonl"))
    if not files:
        raise InputError(f"no .jsonl traces in {folder}")
    return [harness.read_trace(f) for f in files]


def _check_complete(grouped):
    problems = sorted({b for per in grouped.values() for b in per})
    gaps = [f"{m} on {b}" for m in sorted(grouped) for b in problems if b not in grouped[m]]
    if gaps:
        raise InputError("missing traces for " + ", ".join(gaps))
    return problems


def cmd_analyze(args):
    traces = _load_dir(args.trace_dir)
    grouped = analysis.group_traces(traces)
    problems = _check_complete(grouped)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = sorted(grouped)

    if args.rank == "oe":
        big = [t for t in traces if t.dim > metrics.OE_MAX_DIM]
        if big:
            raise Unsupported(f"OE is limited to d <= {metrics.OE_MAX_DIM}")
        per_trace, direction = (lambda t: metrics.oe_series(t).values), analysis.OE_REVERSED
    else:
        per_trace, direction = analysis.running_best, analysis.PERFORMANCE

    values = {}
    for b in problems:
        values[b] = {}
        for m in methods:
            runs = [per_trace(t) for t in grouped[m][b]]
            if len({len(r) for r in runs}) != 1:
                raise InputError(f"traces of {m} on {b} differ in length")
            values[b][m] = np.mean(np.stack(runs), axis=0)
    table = analysis.mean_relative_ranking(values, direction, methods=methods)
    analysis.emit_plot_data(table.as_series(), out / f"rank_{args.rank}.csv",
                            title=f"mean relative rank ({args.rank})", ylabel="rank")

    written = [f"rank_{args.rank}.csv"]
    if all(t.dim >= 2 for t in traces):
        agg = analysis.aggregate_normalized_otsd(
            {m: grouped[m] for m in methods}, with_sem=True)
        analysis.emit_plot_data({m: v[0] for m, v in agg.items()}, out / "otsd_norm.csv",
                                title="normalized OTSD", ylabel="OTSD / psi",
                                sem={m: v[1] for m, v in agg.items()})
        written.append("otsd_norm.csv")
    meta = {"methods": methods, "problems": problems, "rank": direction,
            "otsd_averaging": "seeds within benchmark, then benchmarks",
            "ties": "average ranks", "n_traces": len(traces)}
    (out / "analysis_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for m, r in table.terminal().items():
        print(f"{m}: terminal mean rank {r:.3f}")
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


# --- verify-bound -------------------------------------------------------------------

def _bound_items(source):
    src = Path(source)
    files = sorted(src.glob("*.jsonl")) + sorted(src.glob("*.csv")) if src.is_dir() else [src]
    if not files:
        raise InputError(f"no traces or series found in {src}")
    items, labels = [], []
    for f in files:
        if f.suffix == ".csv":
            items.append(metrics.read_series_csv(f, kind="OTSD_NORM"))
        else:
            tr = harness.read_trace(f)
            if tr.dim < 2:
                raise Unsupported(f"{f}: normalized OTSD is undefined for d < 2")
            items.append(tr)
        labels.append(f.name)
    return items, labels


def cmd_verify_bound(args):
    if args.random is not None:
        d, t, reps = args.random
        if d < 2 or t < 1 or reps < 1:
            raise InputError("--random expects d >= 2, t >= 1, reps >= 1")
        rep = analysis.uniform_bound_study([d], t, reps, seed=args.seed)
    elif args.source:
        items, labels = _bound_items(args.source)
        rep = analysis.verify_otsd_bound(items, labels=labels)
    else:
        raise InputError("give a trace directory or --random d t reps")

    print(f"{'d':>5} {'n':>4} {'max':>10} {'terminal mean':>14} {'spread':>8}")
    for d, (mx, term) in rep.by_dim().items():
        mean = float(np.mean(term))
        spread = float((term.max() - term.min()) / mean) if mean > 0 else 0.0
        print(f"{d:>5} {len(term):>4} {mx:>10.4f} {mean:>14.4f} {spread:>8.2%}")
    for i in rep.informational:
        tag = "VIOLATION" if i in rep.hard_violations else "note"
        print(f"{tag}: {rep.labels[i]} reaches {rep.maxima[i]:.4f}")
    return EXIT_OK if rep.ok else EXIT_VIOLATION


# --- bench-oracle -------------------------------------------------------------------

def cmd_bench_oracle(args):
    rng = make_rng(args.seed, "bench-oracle")
    worst, violations = 0.0, 0
    for _ in range(args.instances):
        n = int(rng.integers(4, 10))
        d = int(rng.choice([2, 3, 6]))
        pts = rng.random((n, d))
        heur = metrics.otsd_series(metrics.ObservationTrace(pts, np.zeros(n))).values[-1]
        exact = metrics.exact_tsp(pts)
        ratio = heur / exact if exact > 0 else 1.0
        worst = max(worst, ratio)
        violations += ratio > 2.0 + 1e-12
    print(f"tour heuristic vs exact on {args.instances} instances: worst ratio {worst:.4f}, "
          f"violations {violations}")

    ok = violations == 0
    cases = [("uniform d=2", rng.random((2000, 2)), 0.0, 0.1),
             ("normal d=2", rng.standard_normal((2000, 2)), math.log(2 * math.pi * math.e), 0.15)]
    for name, pts, truth, tol in cases:
        est = metrics.oe(pts)
        good = abs(est - truth) <= tol
        ok &= good
        print(f"entropy {name}: estimate {est:.4f}, truth {truth:.4f}, "
              f"{'within' if good else 'OUTSIDE'} {tol}")
    return EXIT_OK if ok else EXIT_VIOLATION


# --- entry point --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="boexplore",
                                description="Exploration metrics for Bayesian optimization traces.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    r = sub.add_parser("run", help="run an experiment matrix from a TOML config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", default=None, help="trace directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("metrics", help="metric series CSVs for JSONL traces")
    m.add_argument("traces", nargs="+")
    m.add_argument("--kind", choices=sorted(_KIND), default="otsd")
    m.add_argument("--out", default=None, help="CSV file (one trace) or directory")
    m.set_defaults(func=cmd_metrics)

    a = sub.add_parser("analyze", help="rank tables and OTSD averages for a trace directory")
    a.add_argument("trace_dir")
    a.add_argument("--rank", choices=["performance", "oe"], default="performance")
    a.add_argument("--out", default="analysis")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify-bound", help="check normalized OTSD stays below the bound")
    v.add_argument("source", nargs="?", help="trace directory, trace file or series CSV")
    v.add_argument("--random", nargs=3, type=int, metavar=("D", "T", "REPS"))
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify_bound)

    b = sub.add_parser("bench-oracle", help="brute-force tour and entropy oracle checks")
    b.add_argument("--instances", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench_oracle)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except Unsupported as exc:
        _err(str(exc))
        return EXIT_UNSUPPORTED
    except (ConfigError, InputError, TraceParseError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except BOExploreError as exc:
        _err(str(exc))
        return EXIT_VIOLATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
