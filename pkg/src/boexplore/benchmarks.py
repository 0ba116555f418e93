"""Synthetic test problems on the unit cube, negated for maximization."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InputError

__all__ = [
    "Benchmark",
    "BENCHMARKS",
    "get_benchmark",
    "evaluate",
    "doe",
    "to_native",
    "to_unit",
    "make_rng",
]

_CUBE_TOL = 1e-12


def _branin(x):
    x1, x2 = x[..., 0], x[..., 1]
    b = 5.1 / (4 * math.pi ** 2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def _levy(x):
    w = 1 + (x - 1) / 4
    head = np.sin(math.pi * w[..., 0]) ** 2
    mid = ((w[..., :-1] - 1) ** 2 * (1 + 10 * np.sin(math.pi * w[..., :-1] + 1) ** 2)).sum(-1)
    wd = w[..., -1]
    tail = (wd - 1) ** 2 * (1 + np.sin(2 * math.pi * wd) ** 2)
    return head + mid + tail


_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_A = np.array([
    [10, 3, 17, 3.5, 1.7, 8],
    [0.05, 10, 17, 0.1, 8, 14],
    [3, 3.5, 1.7, 10, 17, 8],
    [17, 8, 0.05, 10, 0.1, 14],
])
_H6_P = 1e-4 * np.array([
    [1312, 1696, 5569, 124, 8283, 5886],
    [2329, 4135, 8307, 3736, 1004, 9991],
    [2348, 1451, 3522, 2883, 3047, 6650],
    [4047, 8828, 8732, 5743, 1091, 381],
])
#: Published minimizer of the 6-d Hartmann function.
HARTMANN6_ARGMIN = np.array([0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573])


def _hartmann6(x):
    x = np.asarray(x)
    inner = (_H6_A * (x[..., None, :] - _H6_P) ** 2).sum(-1)
    return -(_H6_ALPHA * np.exp(-inner)).sum(-1)


def _griewank(x):
    i = np.arange(1, x.shape[-1] + 1)
    return (x ** 2).sum(-1) / 4000 - np.prod(np.cos(x / np.sqrt(i)), axis=-1) + 1


@dataclass(frozen=True)
class Benchmark:
    """A minimization problem on a box, exposed as maximization on [0,1]^d."""

    name: str
    dim: int
    lower: tuple
    upper: tuple
    fn: Callable = None
    known_optimum: Optional[float] = None
    noise_std: float = 0.0

    @property
    def bounds(self):
        return np.array([self.lower, self.upper], dtype=float)

    def __call__(self, u):
        return evaluate(self, u)


BENCHMARKS = {
    "branin2": Benchmark("branin2", 2, (-5.0, 0.0), (10.0, 15.0), _branin,
                         known_optimum=-5 / (4 * math.pi)),
    "levy4": Benchmark("levy4", 4, (-10.0,) * 4, (10.0,) * 4, _levy, known_optimum=0.0),
    "hartmann6": Benchmark("hartmann6", 6, (0.0,) * 6, (1.0,) * 6, _hartmann6,
                           known_optimum=3.3223680114155147),
    "griewank8": Benchmark("griewank8", 8, (-600.0,) * 8, (600.0,) * 8, _griewank,
                           known_optimum=0.0),
}


def get_benchmark(name):
    if isinstance(name, Benchmark):
        return name
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise ConfigError(
            f"unknown benchmark {name!r}; known: {', '.join(sorted(BENCHMARKS))}"
        ) from None


def to_native(benchmark, u):
    b = get_benchmark(benchmark)
    lo, hi = b.bounds
    return lo + np.asarray(u, dtype=float) * (hi - lo)


def to_unit(benchmark, x):
    b = get_benchmark(benchmark)
    lo, hi = b.bounds
    return (np.asarray(x, dtype=float) - lo) / (hi - lo)


def evaluate(benchmark, u):
    """Objective value (maximization convention) at unit-cube point(s) ``u``.

    ``u`` may be a single point of shape ``(d,)`` or a batch ``(n, d)``.
    """
    b = get_benchmark(benchmark)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != b.dim:
        raise InputError(f"{b.name} expects dimension {b.dim}, got {u.shape[-1]}")
    if np.any(~np.isfinite(u)) or u.min() < -_CUBE_TOL or u.max() > 1 + _CUBE_TOL:
        raise InputError(f"{b.name}: input outside the unit cube")
    y = -b.fn(to_native(b, np.clip(u, 0.0, 1.0)))
    return float(y) if np.ndim(y) == 0 else y


def make_rng(*keys):
    """Counter-based generator keyed by integers and/or strings."""
    ints = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(ints)))


def doe(benchmark, n, seed):
    """Uniform initial design: ``n`` points in [0,1]^d and their values.

    Depends only on the benchmark name and ``seed``, so all optimizers run
    with the same seed share the same design.
    """
    b = get_benchmark(benchmark)
    if n < 1:
        raise InputError("design size must be >= 1")
    rng = make_rng(int(seed), "doe", b.name)
    U = rng.random((int(n), b.dim))
    return U, evaluate(b, U)
