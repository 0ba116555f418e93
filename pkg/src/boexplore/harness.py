"""Experiment runner: DoE, then fit / select / evaluate until the budget is spent.

Each (benchmark, acquisition, seed) run is independent and writes one JSONL
trace; runs can be spread over worker processes without changing any
output byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .acquisition import (
    TRUST_REGION,
    AcquisitionSpec,
    batch_select,
    full_bounds,
    maximize_af,
    tr_bounds,
    tr_init,
    tr_update,
)
from .benchmarks import doe, evaluate, get_benchmark, make_rng
from .errors import ConfigError, ModelFitError, TraceFormatError, TraceParseError
from .metrics import ObservationTrace
from .surrogate import fit

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "load_config",
    "run_single",
    "run_experiment",
    "trace_filename",
    "write_trace",
    "read_trace",
]

SCHEMA = 1
HEADER_KEYS = ("benchmark", "af", "seed", "dim", "doe")
#: Relative margin an iteration must beat the incumbent by to count as a
#: trust-region success.
IMPROVEMENT_TOL = 1e-3


@dataclass
class ExperimentConfig:
    """The run matrix: every benchmark x acquisition x seed.

    ``truncate_final_batch`` lets a batched method finish with a smaller
    batch when ``budget - doe_size`` is not a multiple of ``q``; otherwise
    such configurations are rejected.
    """

    benchmarks: List[str]
    afs: List[AcquisitionSpec]
    seeds: List[int]
    doe_size: int = 10
    budget: int = 200
    output_dir: Optional[str] = None
    workers: int = 1
    truncate_final_batch: bool = False

    def __post_init__(self):
        if not self.benchmarks:
            raise ConfigError("config lists no benchmarks")
        for name in self.benchmarks:
            get_benchmark(name)
        if not self.afs:
            raise ConfigError("config lists no acquisition functions")
        self.afs = [a if isinstance(a, AcquisitionSpec) else _spec_from_dict(a) for a in self.afs]
        if not self.seeds:
            raise ConfigError("config lists no seeds")
        self.seeds = [int(s) for s in self.seeds]
        if int(self.doe_size) < 1:
            raise ConfigError("doe_size must be >= 1")
        if int(self.budget) < int(self.doe_size):
            raise ConfigError(f"budget {self.budget} is smaller than doe_size {self.doe_size}")
        self.doe_size, self.budget = int(self.doe_size), int(self.budget)
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        self.workers = int(self.workers)
        if not self.truncate_final_batch:
            for a in self.afs:
                if a.q > 1 and (self.budget - self.doe_size) % a.q:
                    raise ConfigError(
                        f"{a.label}: budget - doe_size = {self.budget - self.doe_size} "
                        f"is not divisible by q = {a.q}")

    def runs(self):
        return [(b, a, s) for b in self.benchmarks for a in self.afs for s in self.seeds]


@dataclass
class RunRecord:
    fingerprint: str
    trace: ObservationTrace
    iteration_seconds: list = field(default_factory=list)
    fit_failures: int = 0
    path: Optional[str] = None

    @property
    def meta(self):
        return self.trace.meta


def _spec_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError(f"acquisition entry must be a table, got {d!r}")
    unknown = set(d) - {"kind", "beta", "q", "variant", "seed"}
    if unknown:
        raise ConfigError(f"unknown acquisition keys: {', '.join(sorted(unknown))}")
    if "kind" not in d:
        raise ConfigError("acquisition entry needs a 'kind'")
    return AcquisitionSpec(d["kind"], d.get("beta"), d.get("q", 1), d.get("variant", ()),
                           d.get("seed", 0))


def load_config(path, **overrides):
    """Read an ``ExperimentConfig`` from a TOML file.

    ``seeds`` may be a list or a count (meaning ``0 .. n-1``). Keyword
    overrides (e.g. ``output_dir``) replace file values when not None.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    allowed = {"benchmarks", "afs", "seeds", "doe_size", "budget", "output_dir", "workers",
               "truncate_final_batch"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for k, v in overrides.items():
        if v is not None:
            raw[k] = v
    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    benchmarks = raw.get("benchmarks", [])
    if isinstance(benchmarks, str):
        benchmarks = [benchmarks]
    return ExperimentConfig(benchmarks=list(benchmarks), afs=list(raw.get("afs", [])),
                            seeds=list(seeds), doe_size=raw.get("doe_size", 10),
                            budget=raw.get("budget", 200), output_dir=raw.get("output_dir"),
                            workers=raw.get("workers", 1),
                            truncate_final_batch=bool(raw.get("truncate_final_batch", False)))


def trace_filename(benchmark, spec, seed):
    return f"{get_benchmark(benchmark).name}_{spec.label}_{spec.variant_label}_{int(seed)}.jsonl"


def _fingerprint(header):
    blob = json.dumps(header, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _run_header(b, spec, seed, doe_size, budget):
    return {
        "benchmark": b.name,
        "af": spec.label,
        "seed": int(seed),
        "dim": b.dim,
        "doe": int(doe_size),
        "variant": spec.variant_label,
        "budget": int(budget),
        "q": spec.q,
        "native_lower": list(b.lower),
        "native_upper": list(b.upper),
        "inputs": "unit-cube",
        "targets": "standardized-for-fit",
    }


def run_single(benchmark, spec, seed, doe_size=10, budget=200, output_dir=None):
    """One optimizer run; returns a ``RunRecord`` (and writes its trace)."""
    b = get_benchmark(benchmark)
    if not isinstance(spec, AcquisitionSpec):
        spec = _spec_from_dict(spec)
    d = b.dim
    U, Y = doe(b, doe_size, seed)
    X, y = [row for row in U], list(np.atleast_1d(Y))
    rng = make_rng(int(seed), "bo", b.name, spec.label, spec.variant_label, spec.seed)
    fit_rng = make_rng(int(seed), "fit", b.name, spec.label, spec.variant_label, spec.seed)
    fixed_point = U[int(np.argmax(Y))].copy()
    use_tr = TRUST_REGION in spec.variant
    tr = tr_init(d, spec.q, center=X[int(np.argmax(y))]) if use_tr else None
    failures = 0
    seconds = []

    while len(y) < budget:
        start = time.perf_counter()
        q_now = min(spec.q, budget - len(y))
        Xa, ya = np.asarray(X), np.asarray(y)
        best_idx = int(np.argmax(ya))
        fit_seed = int(fit_rng.integers(0, 2**32))
        model = None
        if spec.uses_model:
            try:
                model = fit(Xa, ya, seed=fit_seed)
            except ModelFitError:
                failures += 1
        if use_tr:
            bounds = tr_bounds(tr, None if model is None else model.params.lengthscales)
        else:
            bounds = full_bounds(d)

        if spec.uses_model and model is None:
            lo, hi = bounds
            pts = [lo + rng.random(d) * (hi - lo) for _ in range(q_now)]
        elif spec.q == 1:
            pts = [maximize_af(model, spec, bounds, rng, fixed_point=fixed_point,
                               incumbent_x=Xa[best_idx])]
        else:
            pts = batch_select(model, spec, bounds, q_now, rng, incumbent_x=Xa[best_idx])

        prev_best = float(ya[best_idx])
        vals = np.atleast_1d(evaluate(b, np.asarray(pts)))
        X.extend(np.asarray(pts))
        y.extend(vals.tolist())
        if use_tr:
            improved = float(vals.max()) > prev_best + IMPROVEMENT_TOL * abs(prev_best)
            tr = tr_update(tr, improved, incumbent=X[int(np.argmax(y))])
        seconds.append(time.perf_counter() - start)

    header = _run_header(b, spec, seed, doe_size, budget)
    trace = ObservationTrace(np.asarray(X), np.asarray(y), header)
    record = RunRecord(_fingerprint(header), trace, seconds, failures)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / trace_filename(b, spec, seed)
        write_trace(trace, path)
        record.path = str(path)
    return record


def _run_job(args):
    return run_single(*args)


def run_experiment(config, progress=None):
    """Run every (benchmark, acquisition, seed) triple of ``config``.

    Records come back in config order regardless of ``config.workers``.
    ``progress``, if given, is called with each finished ``RunRecord``.
    """
    jobs = [(b, a, s, config.doe_size, config.budget, config.output_dir)
            for b, a, s in config.runs()]
    records = []
    if config.workers == 1 or len(jobs) == 1:
        for job in jobs:
            rec = _run_job(job)
            if progress:
                progress(rec)
            records.append(rec)
        return records
    workers = min(config.workers, len(jobs), os.cpu_count() or 1) or 1
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for rec in pool.map(_run_job, jobs):
            if progress:
                progress(rec)
            records.append(rec)
    return records


# --- JSONL traces -------------------------------------------------------------------

def _dumps(obj):
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_trace(trace, path):
    """Write ``trace`` as JSONL: one header object, then one object per point.

    The header carries ``schema`` plus the trace's ``meta``; the required
    keys (benchmark, af, seed, dim, doe) come first, missing ones as null.
    """
    meta = dict(trace.meta)
    header = {"schema": SCHEMA}
    for k in HEADER_KEYS:
        header[k] = meta.pop(k, None)
    header["dim"] = trace.dim
    meta.pop("schema", None)
    header.update(meta)
    lines = [_dumps(header)]
    for t, (x, v) in enumerate(zip(trace.points, trace.values), start=1):
        lines.append(_dumps({"t": t, "x": [float(c) for c in x], "y": float(v)}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path):
    """Parse a JSONL trace written by ``write_trace`` (or by hand).

    Raises
    ------
    TraceParseError
        A line is not valid JSON or lacks required fields.
    TraceFormatError
        A record's dimension or index is inconsistent with the header.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not rows:
        raise TraceParseError("empty trace file", 1)

    def load(lineno, line):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise TraceParseError("expected a JSON object", lineno)
        return obj

    lineno, line = rows[0]
    header = load(lineno, line)
    if header.get("schema") != SCHEMA:
        raise TraceFormatError(f"header must have schema {SCHEMA}", lineno)
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise TraceFormatError(f"header lacks {', '.join(missing)}", lineno)
    dim = header["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise TraceFormatError("header dim must be a positive integer", lineno)

    points, values = [], []
    for expected_t, (lineno, line) in enumerate(rows[1:], start=1):
        rec = load(lineno, line)
        for key in ("t", "x", "y"):
            if key not in rec:
                raise TraceParseError(f"record lacks '{key}'", lineno)
        x, v = rec["x"], rec["y"]
        if not isinstance(x, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                                             for c in x):
            raise TraceParseError("'x' must be a list of numbers", lineno)
        if len(x) != dim:
            raise TraceFormatError(f"x has {len(x)} coordinates, header says dim = {dim}", lineno)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise TraceParseError("'y' must be a finite number", lineno)
        if rec["t"] != expected_t:
            raise TraceFormatError(f"expected t = {expected_t}, got {rec['t']!r}", lineno)
        points.append([float(c) for c in x])
        values.append(float(v))

    meta = {k: v for k, v in header.items() if k != "schema"}
    pts = np.asarray(points, dtype=float).reshape(len(points), dim)
    try:
        return ObservationTrace(pts, np.asarray(values), meta)
    except ValueError as exc:
        raise TraceFormatError(str(exc), rows[0][0]) from None
