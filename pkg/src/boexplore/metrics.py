"""Trace-level exploration measures.

Two families of quantities are computed from the sequence of points an
optimizer evaluated:

* OTSD, the length of a closed tour through all observed points, built by
  cheapest insertion in observation order, and its dimension-free
  normalization by the worst-case tour length bound ``psi_bound``;
* OE, the Kozachenko-Leonenko k-nearest-neighbour estimate of the
  differential entropy of the observed points.

Both are available as whole-trace series indexed by the observation count
``t``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import digamma, gammaln

from .errors import InputError

__all__ = [
    "ObservationTrace",
    "TourState",
    "MetricSeries",
    "otsd_insert",
    "otsd_series",
    "psi_bound",
    "otsd_normalized",
    "oe",
    "oe_series",
    "oe_k",
    "exact_tsp",
    "tour_length",
    "write_series_csv",
    "read_series_csv",
]

#: Nearest-neighbour distances are floored here before taking the log, so
#: repeated points give a large negative but finite entropy.
EPS_FLOOR = 1e-12

#: Tolerance used when checking that points lie in the unit cube.
CUBE_TOL = 1e-12

OE_MAX_DIM = 50

KINDS = ("OTSD", "OTSD_NORM", "OE")


@dataclass
class ObservationTrace:
    """Evaluated points and values of one optimizer run.

    ``points`` are in normalized search-space coordinates and must lie in
    the unit cube unless ``check_bounds=False`` is passed (used for
    analysis-only inputs such as Gaussian samples).
    """

    points: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    check_bounds: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if pts.size else pts.reshape(0, 1)
        if pts.ndim != 2:
            raise InputError(f"points must be a 2-d array, got shape {pts.shape}")
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(vals) != len(pts):
            raise InputError(
                f"{len(pts)} points but {len(vals)} values")
        if not np.all(np.isfinite(pts)):
            raise InputError("points must be finite")
        if self.check_bounds and pts.size and (
                pts.min() < -CUBE_TOL or pts.max() > 1 + CUBE_TOL):
            raise InputError("points must lie in the unit cube [0, 1]^d")
        self.points = pts
        self.values = vals
        self.meta = dict(self.meta)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def prefix(self, t):
        """First ``t`` observations as a new trace."""
        return ObservationTrace(self.points[:t], self.values[:t], self.meta,
                                check_bounds=False)

    def __eq__(self, other):
        if not isinstance(other, ObservationTrace):
            return NotImplemented
        return (self.meta == other.meta
                and self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class TourState:
    """Cyclic tour over inserted point indices plus its accumulated length.

    ``edges[i]`` caches the length of the edge ``perm[i] -> perm[i+1]``
    (wrapping around), which is what makes one insertion O(k d).
    """

    perm: tuple
    length: float
    edges: tuple = field(default=(), repr=False)

    @classmethod
    def start(cls, index=0):
        return cls(perm=(int(index),), length=0.0, edges=(0.0,))

    def __len__(self):
        return len(self.perm)


@dataclass
class MetricSeries:
    """Per-iteration metric values; ``values[j]`` belongs to ``t = t0 + j``."""

    kind: str
    values: np.ndarray
    dim: int
    t0: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown metric kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)

    @property
    def t(self):
        return np.arange(self.t0, self.t0 + len(self.values))

    def at(self, t):
        """Value for observation count ``t``."""
        j = t - self.t0
        if j < 0 or j >= len(self.values):
            raise InputError(f"t={t} outside series range "
                             f"[{self.t0}, {self.t0 + len(self.values) - 1}]")
        return float(self.values[j])

    def __len__(self):
        return len(self.values)


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise InputError(f"expected an (n, d) point array, got shape {pts.shape}")
    return pts


def _cheapest_insertion(perm, edges, dnew):
    """Insert a new node into a cyclic tour at minimal extra length.

    ``dnew[i]`` is the distance from the new node to ``perm[i]``. Returns
    the insertion slot ``i*`` (new node goes between ``perm[i*]`` and its
    successor) and the cost increase. Ties go to the smallest slot.
    """
    delta = dnew + np.roll(dnew, -1) - edges
    i = int(np.argmin(delta))
    # Triangle inequality makes this >= 0 up to rounding.
    return i, max(float(delta[i]), 0.0)


def _splice(perm, edges, dnew, i, new_index):
    k = len(perm)
    nxt = (i + 1) % k
    perm = np.concatenate([perm[:i + 1], [new_index], perm[i + 1:]])
    edges = np.concatenate([edges[:i], [dnew[i], dnew[nxt]], edges[i + 1:]])
    return perm, edges


def otsd_insert(state, new_point, all_points, index=None):
    """Insert one point into a tour by cheapest insertion.

    Parameters
    ----------
    state : TourState
        Tour over at least one point.
    new_point : array_like, shape (d,)
        Point to insert.
    all_points : array_like, shape (n, d)
        Point store; ``perm`` entries index its rows.
    index : int, optional
        Index recorded for the new point. Defaults to ``len(all_points)``,
        i.e. the point is treated as appended to the store.

    Returns
    -------
    TourState
    """
    pts = _as_points(all_points)
    x = np.asarray(new_point, dtype=float).reshape(-1)
    if x.shape[0] != pts.shape[1]:
        raise InputError(
            f"new point has dimension {x.shape[0]}, store has {pts.shape[1]}")
    if len(state.perm) < 1:
        raise InputError("cannot insert into an empty tour")
    perm = np.asarray(state.perm, dtype=np.intp)
    edges = np.asarray(state.edges, dtype=float)
    if len(edges) != len(perm):
        edges = np.linalg.norm(pts[perm] - pts[np.roll(perm, -1)], axis=1)
    dnew = np.linalg.norm(pts[perm] - x, axis=1)
    i, delta = _cheapest_insertion(perm, edges, dnew)
    new_index = len(pts) if index is None else int(index)
    perm, edges = _splice(perm, edges, dnew, i, new_index)
    return TourState(tuple(int(p) for p in perm), state.length + delta,
                     tuple(edges.tolist()))


def _trace_points(trace):
    if isinstance(trace, ObservationTrace):
        return trace.points
    return _as_points(trace)


def _otsd_values(pts):
    T = len(pts)
    out = np.zeros(T)
    perm = np.array([0], dtype=np.intp)
    edges = np.zeros(1)
    total = 0.0
    for k in range(1, T):
        row = cdist(pts[k:k + 1], pts[:k])[0]
        dnew = row[perm]
        i, delta = _cheapest_insertion(perm, edges, dnew)
        perm, edges = _splice(perm, edges, dnew, i, k)
        total += delta
        out[k] = total
    return out


def otsd_series(trace):
    """Heuristic OTSD after each observation, ``t = 1..T``.

    ``values[0]`` (t=1) is 0 and the series is non-decreasing. Runs in
    O(d T^2).
    """
    pts = _trace_points(trace)
    if len(pts) == 0:
        raise InputError("trace is empty")
    return MetricSeries("OTSD", _otsd_values(pts), pts.shape[1], t0=1)


def psi_bound(d, t):
    """Upper bound ``2 sqrt(5d) (3t/2)^(1-1/d)`` on the optimal tour length.

    Holds for ``t`` points in the unit ``d``-cube, ``d >= 3``; also used as
    the normalizer for ``d = 2``. ``t`` may be an array.
    """
    if isinstance(d, bool) or int(d) != d or d < 2:
        raise InputError(f"psi_bound needs integer d >= 2, got {d!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 1) or np.any(t_arr != np.floor(t_arr)):
        raise InputError(f"psi_bound needs integer t >= 1, got {t!r}")
    d = int(d)
    out = 2.0 * math.sqrt(5.0 * d) * (1.5 * t_arr) ** (1.0 - 1.0 / d)
    return float(out) if out.ndim == 0 else out


def otsd_normalized(trace):
    """OTSD divided by ``psi_bound(d, t)`` for every ``t``."""
    raw = otsd_series(trace)
    if raw.dim < 2:
        raise InputError("normalized OTSD is undefined for d < 2")
    return MetricSeries("OTSD_NORM", raw.values / psi_bound(raw.dim, raw.t),
                        raw.dim, t0=1)


def oe_k(t):
    """Neighbour order used at observation count ``t``: ``max(1, round(ln t))``."""
    return max(1, int(math.floor(math.log(t) + 0.5)))


def _log_unit_ball_volume(d):
    return 0.5 * d * math.log(math.pi) - gammaln(1.0 + 0.5 * d)


def _kl_estimate(kth_dist, d, k, use_psi_one=False):
    t = len(kth_dist)
    logs = np.log(np.maximum(kth_dist, EPS_FLOOR))
    offset = digamma(1) if use_psi_one else digamma(k)
    return (d / t) * logs.sum() + digamma(t) - offset + _log_unit_ball_volume(d)


def oe(points, k=None, use_psi_one=False):
    """Kozachenko-Leonenko entropy estimate of a point set.

    Parameters
    ----------
    points : array_like, shape (t, d)
        Any real points; no unit-cube restriction.
    k : int, optional
        Neighbour order, ``1 <= k <= t-1``. Defaults to ``oe_k(t)``.
    use_psi_one : bool
        Subtract ``psi(1)`` instead of ``psi(k)``. The two agree for
        ``k = 1``; for ``k > 1`` the ``psi(1)`` form is shifted upwards by
        ``psi(k) - psi(1)`` and no longer consistent.

    Returns
    -------
    float
        ``(d/t) sum_i log eps_i + psi(t) - psi(k) + log V_d`` where
        ``eps_i`` is the distance from point ``i`` to its k-th nearest
        neighbour (floored at ``EPS_FLOOR``) and ``V_d`` the unit-ball
        volume.
    """
    pts = _as_points(points)
    t, d = pts.shape
    if t < 2:
        raise InputError("OE needs at least 2 points")
    if k is None:
        k = oe_k(t)
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= t - 1:
        raise InputError(f"k must be an integer in [1, {t - 1}], got {k!r}")
    k = int(k)
    # k+1 because every point is its own nearest neighbour at distance 0.
    dist, _ = cKDTree(pts).query(pts, k=k + 1)
    return float(_kl_estimate(dist[:, k], d, k, use_psi_one))


def oe_series(trace, use_psi_one=False):
    """OE of every prefix ``X_t``, ``t = 3..T``, with ``k = oe_k(t)``.

    Neighbour lists are updated incrementally, so the total cost is
    O(d T^2) for distances plus O(T^2 k) for bookkeeping.
    """
    pts = _trace_points(trace)
    T, d = pts.shape
    if T < 3:
        raise InputError("OE series needs a trace of length >= 3")
    kmax = oe_k(T)
    # nn[i] holds the kmax smallest distances from point i to the others seen so far.
    nn = np.full((T, kmax), np.inf)
    out = np.empty(T - 2)
    for j in range(1, T):
        row = cdist(pts[j:j + 1], pts[:j])[0]
        merged = np.concatenate([nn[:j], row[:, None]], axis=1)
        merged.sort(axis=1)
        nn[:j] = merged[:, :kmax]
        m = min(kmax, j)
        nn[j, :m] = np.sort(np.partition(row, m - 1)[:m]) if m < j else np.sort(row)
        t = j + 1
        if t >= 3:
            k = oe_k(t)
            out[t - 3] = _kl_estimate(nn[:t, k - 1], d, k, use_psi_one)
    return MetricSeries("OE", out, d, t0=3)


def tour_length(points, perm):
    """Length of the closed tour visiting ``points[perm]`` in order."""
    pts = _as_points(points)
    p = np.asarray(perm, dtype=np.intp)
    if len(p) <= 1:
        return 0.0
    return float(np.linalg.norm(pts[p] - pts[np.roll(p, -1)], axis=1).sum())


def exact_tsp(points):
    """Optimal closed-tour length by exhaustive search (n <= 10).

    The first point is fixed and all ``(n-1)!`` orders of the rest are
    enumerated.
    """
    pts = _as_points(points)
    n = len(pts)
    if n < 1:
        raise InputError("exact_tsp needs at least one point")
    if n > 10:
        raise InputError(f"exact_tsp is limited to 10 points, got {n}")
    if n == 1:
        return 0.0
    D = cdist(pts, pts)
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.intp)
    lengths = D[0, perms[:, 0]] + D[perms[:, -1], 0]
    for j in range(n - 2):
        lengths += D[perms[:, j], perms[:, j + 1]]
    return float(lengths.min())


def write_series_csv(series, path):
    """Write ``t,value`` rows (UTF-8, LF)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(series.t, series.values):
            w.writerow([int(t), repr(float(v))])
    return path


def read_series_csv(path, kind="OTSD", dim=0):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "value"]:
        raise InputError(f"{path}: expected header 't,value'")
    ts = [int(r[0]) for r in rows[1:]]
    vals = [float(r[1]) for r in rows[1:]]
    t0 = ts[0] if ts else 1
    return MetricSeries(kind, np.array(vals), dim, t0=t0)
