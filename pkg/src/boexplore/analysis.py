"""Cross-run aggregation: normalized-OTSD averages, rank tables, bound checks, plots."""

from __future__ import annotations

import csv
import html
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np
from scipy.stats import rankdata

from .benchmarks import make_rng
from .errors import InputError
from .metrics import MetricSeries, ObservationTrace, otsd_series, psi_bound

__all__ = [
    "PERFORMANCE",
    "OE_REVERSED",
    "RankTable",
    "BoundReport",
    "method_label",
    "group_traces",
    "running_best",
    "aggregate_series",
    "aggregate_normalized_otsd",
    "mean_relative_ranking",
    "verify_otsd_bound",
    "uniform_bound_study",
    "emit_plot_data",
    "read_wide_csv",
    "render_svg",
]

PERFORMANCE = "PERFORMANCE"
OE_REVERSED = "OE_REVERSED"
INFO_THRESHOLD = 1.0
HARD_THRESHOLD = 2.0


def method_label(trace):
    """``af`` plus the variant suffix (omitted for the base variant)."""
    af = str(trace.meta.get("af", "unknown"))
    variant = trace.meta.get("variant", "base")
    return af if variant in (None, "base") else f"{af}+{variant}"


def group_traces(traces):
    """``{method: {benchmark: [traces]}}`` from trace metadata."""
    out: Dict[str, Dict[str, list]] = {}
    for tr in traces:
        bench = str(tr.meta.get("benchmark", "unknown"))
        out.setdefault(method_label(tr), {}).setdefault(bench, []).append(tr)
    return out


def running_best(trace):
    """Best value observed up to each ``t`` (the performance curve)."""
    return np.maximum.accumulate(np.asarray(trace.values, dtype=float))


def _trace_key(tr):
    seed = tr.meta.get("seed")
    return (str(seed), np.asarray(tr.points).tobytes(), np.asarray(tr.values).tobytes())


def _series_key(values):
    return np.asarray(values, dtype=float).tobytes()


# --- averaging ----------------------------------------------------------------------

def aggregate_series(values_by_method, with_sem=False):
    """Mean over seeds within each benchmark, then over benchmarks.

    Parameters
    ----------
    values_by_method : dict
        ``{method: {benchmark: [series, ...]}}``; every series has the same
        length.
    with_sem : bool
        Also return the standard error of the mean,
        ``sqrt(sum_b var_b / n_b) / B`` with ``var_b`` the across-seed
        sample variance on benchmark ``b`` (0 when a benchmark has one seed).

    Returns
    -------
    dict
        ``{method: mean}`` or ``{method: (mean, sem)}``.
    """
    if not values_by_method:
        raise InputError("no methods to aggregate")
    length = None
    out = {}
    for method in sorted(values_by_method):
        per_bench = values_by_method[method]
        if not per_bench:
            raise InputError(f"method {method!r} has no series")
        means, var_terms = [], []
        for bench in sorted(per_bench):
            runs = [np.asarray(s, dtype=float).reshape(-1) for s in per_bench[bench]]
            if not runs:
                raise InputError(f"method {method!r} has no series on {bench!r}")
            for r in runs:
                if length is None:
                    length = len(r)
                if len(r) != length:
                    raise InputError(
                        f"series lengths differ ({len(r)} vs {length}) for {method!r} on {bench!r}")
            stack = np.stack(sorted(runs, key=_series_key))
            means.append(stack.mean(axis=0))
            if len(runs) > 1:
                var_terms.append(stack.var(axis=0, ddof=1) / len(runs))
            else:
                var_terms.append(np.zeros(length))
        mean = np.stack(means).mean(axis=0)
        if with_sem:
            sem = np.sqrt(np.stack(var_terms).sum(axis=0)) / len(means)
            out[method] = (mean, sem)
        else:
            out[method] = mean
    return out


def aggregate_normalized_otsd(traces_by_method, with_sem=False):
    """Per-method mean normalized OTSD series across seeds and benchmarks.

    ``traces_by_method`` maps a method label to a list of traces (their
    ``meta['benchmark']`` groups them) or to ``{benchmark: [traces]}``.
    Averaging is over seeds first, then benchmarks.
    """
    values = {}
    for method, group in traces_by_method.items():
        if isinstance(group, dict):
            items = [(b, tr) for b, lst in group.items() for tr in lst]
        else:
            items = [(str(tr.meta.get("benchmark", "unknown")), tr) for tr in group]
        per_bench: Dict[str, list] = {}
        for bench, tr in sorted(items, key=lambda bt: (bt[0], _trace_key(bt[1]))):
            per_bench.setdefault(bench, []).append(_normalized(tr))
        values[method] = per_bench
    return aggregate_series(values, with_sem=with_sem)


def _normalized(trace):
    d = trace.dim
    if d < 2:
        raise InputError("normalized OTSD needs d >= 2")
    s = otsd_series(trace)
    return s.values / psi_bound(d, np.arange(1, len(s.values) + 1))


# --- rankings ------------------------------------------------------------------------

@dataclass
class RankTable:
    """Mean relative ranks.

    ``ranks[i, j]`` is the mean rank of ``methods[i]`` at grid index ``j``;
    ``per_problem[p, i, j]`` holds the ranks before averaging.
    """

    methods: List[str]
    problems: List[str]
    ranks: np.ndarray
    direction: str
    per_problem: np.ndarray = field(repr=False, default=None)

    def terminal(self):
        return dict(zip(self.methods, self.ranks[:, -1].tolist()))

    def as_series(self):
        return {m: self.ranks[i] for i, m in enumerate(self.methods)}

    def __eq__(self, other):
        if not isinstance(other, RankTable):
            return NotImplemented
        return (self.methods == other.methods and self.problems == other.problems
                and self.direction == other.direction
                and np.array_equal(self.ranks, other.ranks))


def mean_relative_ranking(values, direction=PERFORMANCE, methods=None):
    """Rank methods per problem (and per t) and average the ranks over problems.

    Parameters
    ----------
    values : dict
        ``{problem: {method: scalar or series}}``.
    direction : {"PERFORMANCE", "OE_REVERSED"}
        PERFORMANCE gives the highest value rank 1. OE_REVERSED gives the
        highest value the largest rank, so more explorative methods rank
        higher.
    methods : list of str, optional
        Method order; defaults to the sorted union of methods seen.

    Ties receive the average of the ranks they span.
    """
    if direction not in (PERFORMANCE, OE_REVERSED):
        raise InputError(f"unknown rank direction {direction!r}")
    if not values:
        raise InputError("no problems to rank")
    problems = sorted(values)
    if methods is None:
        methods = sorted({m for p in problems for m in values[p]})
    methods = list(methods)
    if not methods:
        raise InputError("no methods to rank")
    length = None
    cube = []
    for p in problems:
        rows = []
        for m in methods:
            if m not in values[p]:
                raise InputError(f"missing value for method {m!r} on problem {p!r}")
            v = np.atleast_1d(np.asarray(values[p][m], dtype=float))
            if length is None:
                length = len(v)
            if len(v) != length:
                raise InputError(f"series lengths differ for {m!r} on {p!r}")
            if not np.all(np.isfinite(v)):
                raise InputError(f"non-finite value for {m!r} on {p!r}")
            rows.append(v)
        mat = np.stack(rows)                  # (M, T)
        key = -mat if direction == PERFORMANCE else mat
        cube.append(rankdata(key, method="average", axis=0))
    per_problem = np.stack(cube)              # (P, M, T)
    return RankTable(methods, problems, per_problem.mean(axis=0), direction, per_problem)


# --- bound verification ---------------------------------------------------------------

@dataclass
class BoundReport:
    labels: List[str]
    maxima: np.ndarray
    terminal: np.ndarray
    dims: List[int]

    @property
    def informational(self):
        """Indices whose normalized OTSD reached 1 (unexpected, not fatal)."""
        return [i for i, m in enumerate(self.maxima) if m >= INFO_THRESHOLD]

    @property
    def hard_violations(self):
        """Indices at or above 2, which the tour heuristic cannot produce."""
        return [i for i, m in enumerate(self.maxima) if m >= HARD_THRESHOLD]

    @property
    def ok(self):
        return not self.hard_violations

    def by_dim(self):
        """``{d: (max over reps, terminal values)}``."""
        out = {}
        for d in sorted(set(self.dims)):
            idx = [i for i, di in enumerate(self.dims) if di == d]
            out[d] = (float(self.maxima[idx].max()), self.terminal[idx])
        return out


def verify_otsd_bound(traces, d=None, labels=None):
    """Maximum normalized OTSD of each trace, flagged against 1 and 2.

    Items may be traces, ``MetricSeries`` of kind ``OTSD_NORM`` or plain
    arrays of normalized values (``d`` is then taken from the series or
    the argument).
    """
    traces = list(traces)
    maxima, terminal, dims, names = [], [], [], []
    for i, item in enumerate(traces):
        if isinstance(item, ObservationTrace):
            if d is not None and item.dim != d:
                raise InputError(f"trace {i} has dimension {item.dim}, expected {d}")
            vals = _normalized(item)
            dim = item.dim
        elif isinstance(item, MetricSeries):
            if item.kind != "OTSD_NORM":
                raise InputError("bound verification needs normalized OTSD series")
            vals, dim = np.asarray(item.values, dtype=float), item.dim
        else:
            vals, dim = np.asarray(item, dtype=float).reshape(-1), d
        if vals.size == 0:
            raise InputError(f"item {i} is empty")
        maxima.append(float(np.max(vals)))
        terminal.append(float(vals[-1]))
        dims.append(int(dim) if dim is not None else 0)
        names.append(labels[i] if labels is not None else
                     (method_label(item) if isinstance(item, ObservationTrace) else str(i)))
    return BoundReport(names, np.asarray(maxima), np.asarray(terminal), dims)


def uniform_bound_study(dims, t, reps, seed=0):
    """Bound report for ``reps`` uniform random traces of length ``t`` per ``d``."""
    items, labels = [], []
    for d in dims:
        if int(d) < 2:
            raise InputError("dimension must be >= 2")
        for r in range(int(reps)):
            pts = make_rng(int(seed), "uniform-bound", int(d), r).random((int(t), int(d)))
            items.append(ObservationTrace(pts, np.zeros(int(t))))
            labels.append(f"d={d} rep={r}")
    return verify_otsd_bound(items, labels=labels)


# --- output --------------------------------------------------------------------------

def emit_plot_data(series, path, t=None, svg=True, title="", ylabel="", sem=None):
    """Write ``t,method1,method2,...`` CSV (and an SVG line chart next to it).

    Parameters
    ----------
    series : dict
        ``{method: values}``, all of equal length.
    path : str or Path
        CSV destination; the SVG gets the same stem with ``.svg``.
    t : array_like, optional
        Grid values; defaults to ``1..T``.
    sem : dict, optional
        Standard errors drawn as bands in the SVG.

    Returns
    -------
    list of Path
    """
    if not series:
        raise InputError("no series to write")
    methods = list(series)
    cols = [np.asarray(series[m], dtype=float).reshape(-1) for m in methods]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise InputError("all series must have the same length")
    tt = np.arange(1, n + 1) if t is None else np.asarray(t).reshape(-1)
    if len(tt) != n:
        raise InputError("grid length does not match the series")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + methods)
        for j in range(n):
            tj = tt[j]
            tj = int(tj) if float(tj).is_integer() else repr(float(tj))
            w.writerow([tj] + [repr(float(c[j])) for c in cols])
    written = [path]
    if svg:
        svg_path = path.with_suffix(".svg")
        svg_path.write_text(render_svg(dict(zip(methods, cols)), tt, title=title,
                                       ylabel=ylabel, sem=sem), encoding="utf-8")
        written.append(svg_path)
    return written


def read_wide_csv(path):
    """Inverse of ``emit_plot_data``'s CSV: returns ``(t, {method: values})``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise InputError(f"{path}: not a wide CSV with a 't' column")
    methods = rows[0][1:]
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(len(rows) - 1, -1)
    return data[:, 0], {m: data[:, i + 1] for i, m in enumerate(methods)}


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def render_svg(series, t, title="", ylabel="", sem=None, width=640, height=400):
    """Minimal standalone SVG line chart."""
    left, right, top, bottom = 60, 150, 30, 45
    pw, ph = width - left - right, height - top - bottom
    t = np.asarray(t, dtype=float)
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    lows = [v - (sem[m] if sem and m in sem else 0) for m, v in zip(series, ys)]
    highs = [v + (sem[m] if sem and m in sem else 0) for m, v in zip(series, ys)]
    y0, y1 = float(np.min([l.min() for l in lows])), float(np.max([h.max() for h in highs]))
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = float(t.min()), float(t.max())
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" '
                   f'font-size="13">{html.escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    for v in _ticks(y0, y1):
        yy = sy(v)
        out.append(f'<line x1="{left - 4}" y1="{yy:.1f}" x2="{left + pw}" y2="{yy:.1f}" '
                   f'stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{yy + 4:.1f}" text-anchor="end">{v:g}</text>')
    for v in _ticks(x0, x1):
        xx = sx(v)
        out.append(f'<text x="{xx:.1f}" y="{top + ph + 16}" text-anchor="middle">{v:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">t</text>')
    if ylabel:
        out.append(f'<text transform="translate(14,{top + ph / 2:.1f}) rotate(-90)" '
                   f'text-anchor="middle">{html.escape(ylabel)}</text>')
    for i, (m, v) in enumerate(zip(series, ys)):
        color = _PALETTE[i % len(_PALETTE)]
        if sem and m in sem:
            s = np.asarray(sem[m], dtype=float)
            upper = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(t, v + s))
            lower = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(t[::-1], (v - s)[::-1]))
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.15" '
                       f'stroke="none"/>')
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(t, v))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{html.escape(str(m))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
