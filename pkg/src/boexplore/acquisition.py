"""Acquisition functions, their maximization, and exploration-modulating variants.

Closed-form acquisition values (``ei``, ``pi``, ``ucb``, ``mes``) work on
posterior moments and broadcast over arrays. ``maximize_af`` handles the
model-based search over a box; ``batch_select`` builds q-point batches with
the kriging believer; trust-region and RAASP helpers shape where the search
happens.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr
from scipy.stats import qmc, truncnorm

from .errors import ConfigError, InputError, NotFittedError
from .surrogate import GpModel, kernel_matrix, sample_posterior_function

__all__ = [
    "KINDS",
    "TRUST_REGION",
    "RAASP",
    "AcquisitionSpec",
    "TrustRegionState",
    "ei",
    "pi",
    "ucb",
    "mes",
    "sample_max_values",
    "kg",
    "maximize_af",
    "raasp_candidates",
    "tr_init",
    "tr_update",
    "tr_bounds",
    "batch_select",
    "full_bounds",
]

KINDS = ("EI", "PI", "UCB", "MES", "TS", "KG", "RS", "DM")
TRUST_REGION = "TRUST_REGION"
RAASP = "RAASP"
BATCH_KINDS = ("EI", "UCB", "TS", "KG")

N_RAW = 512
N_RAW_TS = 1024
N_REFINE = 10
N_REFINE_TS = 20
ASCENT_STEPS = 50
FD_REL_STEP = 1e-6
INITIAL_STEP = 0.1

MES_SAMPLES = 10
MES_GRID = 1000
KG_FANTASIES = 8
KG_GRID = 512
KG_MAX_DIM = 10

RAASP_SIGMA = 0.2
DEDUP_TOL = 1e-6

TR_L_INIT = 0.8
TR_L_MIN = 2.0 ** -7
TR_L_MAX = 1.6
TR_SUCCESS_TOL = 3

_SQRT_2PI = math.sqrt(2 * math.pi)


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class AcquisitionSpec:
    """What to maximize and how.

    Parameters
    ----------
    kind : str
        One of ``KINDS``.
    beta : float, optional
        Exploration weight; required for UCB and rejected otherwise.
    q : int
        Batch size.
    variant : iterable of str
        Any of ``TRUST_REGION`` and ``RAASP``.
    seed : int
        Extra seed material mixed into per-run randomness.
    """

    kind: str
    beta: Optional[float] = None
    q: int = 1
    variant: frozenset = field(default_factory=frozenset)
    seed: int = 0

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in KINDS:
            raise ConfigError(f"unknown acquisition kind {self.kind!r}; known: {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        if isinstance(self.variant, str):
            raw = [self.variant] if self.variant else []
        else:
            raw = list(self.variant or [])
        aliases = {"TR": TRUST_REGION, TRUST_REGION: TRUST_REGION, RAASP: RAASP}
        variant = set()
        for v in raw:
            key = str(v).upper()
            if key not in aliases:
                raise ConfigError(f"unknown variant {v!r}; expected TRUST_REGION or RAASP")
            variant.add(aliases[key])
        object.__setattr__(self, "variant", frozenset(variant))
        if kind == "UCB":
            if self.beta is None or not (float(self.beta) >= 0 and math.isfinite(float(self.beta))):
                raise ConfigError("UCB requires a finite beta >= 0")
            object.__setattr__(self, "beta", float(self.beta))
        elif self.beta is not None:
            raise ConfigError(f"beta is only meaningful for UCB, not {kind}")
        if int(self.q) != self.q or self.q < 1:
            raise ConfigError("batch size q must be a positive integer")
        object.__setattr__(self, "q", int(self.q))
        if self.q > 1 and kind not in BATCH_KINDS:
            raise ConfigError(f"batching is supported for {', '.join(BATCH_KINDS)}, not {kind}")

    @property
    def label(self):
        """Short method name, e.g. ``EI``, ``UCB-0.1``, ``EI-q8``."""
        s = self.kind
        if self.kind == "UCB":
            s += f"-{self.beta:g}"
        if self.q > 1:
            s += f"-q{self.q}"
        return s

    @property
    def variant_label(self):
        parts = []
        if TRUST_REGION in self.variant:
            parts.append("TR")
        if RAASP in self.variant:
            parts.append("RAASP")
        return "+".join(parts) if parts else "base"

    @property
    def uses_model(self):
        return self.kind not in ("RS", "DM")


# --- closed forms -----------------------------------------------------------------

def _scalar_or_array(x, *inputs):
    return float(x) if all(np.ndim(a) == 0 for a in inputs) else x


def _sigma(sigma2):
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise InputError("sigma2 must be >= 0")
    return np.sqrt(sigma2)


def ei(mu, sigma2, incumbent):
    """Expected improvement over ``incumbent``; exact at ``sigma2 == 0``."""
    mu_a = np.asarray(mu, dtype=float)
    s = _sigma(sigma2)
    diff = mu_a - incumbent
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.clip(np.where(s > 0, diff / np.where(s > 0, s, 1.0), 0.0), -1e10, 1e10)
    val = np.where(s > 0, diff * ndtr(z) + s * np.exp(-0.5 * z * z) / _SQRT_2PI,
                   np.maximum(diff, 0.0))
    return _scalar_or_array(np.maximum(val, 0.0), mu, sigma2, incumbent)


def pi(mu, sigma2, incumbent):
    """Probability that the value at the point exceeds ``incumbent``."""
    mu_a = np.asarray(mu, dtype=float)
    s = _sigma(sigma2)
    diff = mu_a - incumbent
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(s > 0, ndtr(diff / np.where(s > 0, s, 1.0)), (diff > 0).astype(float))
    return _scalar_or_array(val, mu, sigma2, incumbent)


def ucb(mu, sigma2, beta):
    if beta < 0:
        raise InputError("beta must be >= 0")
    val = np.asarray(mu, dtype=float) + math.sqrt(beta) * _sigma(sigma2)
    return _scalar_or_array(val, mu, sigma2)


def _mes_terms(gamma):
    # gamma * pdf / (2 cdf) - log cdf, stable for very negative gamma
    gamma = np.clip(gamma, -1e10, 1e10)
    log_cdf = log_ndtr(gamma)
    ratio = np.exp(-0.5 * gamma * gamma - math.log(_SQRT_2PI) - log_cdf)
    return np.maximum(gamma * ratio / 2.0 - log_cdf, 0.0)


def mes(mu, sigma2, max_value_samples):
    """Max-value entropy search value averaged over sampled maxima.

    ``mu`` and ``sigma2`` may be arrays of shape (n,); the result then has
    shape (n,).
    """
    samples = np.asarray(max_value_samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise InputError("mes needs at least one max-value sample")
    sigma2_a = np.asarray(sigma2, dtype=float)
    if np.any(sigma2_a <= 0):
        raise InputError("mes requires sigma2 > 0")
    mu_a = np.asarray(mu, dtype=float)
    gamma = (samples - mu_a[..., None]) / np.sqrt(sigma2_a)[..., None]
    val = _mes_terms(gamma).mean(-1)
    return _scalar_or_array(val, mu, sigma2)


# --- model-based helpers ----------------------------------------------------------

def _require_model(model):
    if not isinstance(model, GpModel) or not model.fitted:
        raise NotFittedError("GP model has not been fitted")


def _sobol(n, d, rng, lo=None, hi=None):
    with warnings.catch_warnings():
        # balance is only exact for powers of two; 1000-point grids are fine
        warnings.simplefilter("ignore", UserWarning)
        u = qmc.Sobol(d, scramble=True, seed=rng).random(n)
    if lo is None:
        return u
    return lo + u * (hi - lo)


def _seed_from(rng):
    return int(rng.integers(0, 2**63 - 1))


def _gumbel_from_quantiles(mu, sigma, incumbent, n_samples, rng):
    scale = max(float(np.max(sigma)), 1e-12 * max(1.0, float(np.max(np.abs(mu)))))
    sig = np.maximum(sigma, 1e-12 * scale)
    top = float(np.max(mu))

    def log_cdf(v):
        return float(log_ndtr((v - mu) / sig).sum())

    lo = top - 5.0 * scale
    while log_cdf(lo) > math.log(0.25):
        lo -= 5.0 * scale
    hi = float(np.max(mu + 8.0 * sig)) + scale
    while log_cdf(hi) < math.log(0.75):
        hi += 5.0 * scale

    def quantile(p):
        return brentq(lambda v: log_cdf(v) - math.log(p), lo, hi, xtol=1e-12 * scale, maxiter=200)

    q25, q50, q75 = quantile(0.25), quantile(0.5), quantile(0.75)
    b = (q25 - q75) / (math.log(-math.log(0.25)) - math.log(-math.log(0.75)))
    a = q50 + b * math.log(math.log(2.0))
    u = rng.random(n_samples)
    draws = a - b * np.log(-np.log(u))
    return np.maximum(draws, incumbent)


def sample_max_values(model, n_samples=MES_SAMPLES, seed=0, grid=None, standardized=False):
    """Draw plausible maxima of the latent function (Gumbel approximation).

    The CDF of the maximum over a 1000-point Sobol grid (or ``grid``) is
    approximated by a product of independent normal CDFs; a Gumbel law is
    matched to its quartiles and sampled. Draws are clamped from below by
    the best observed value.

    Returns
    -------
    numpy.ndarray, shape (n_samples,)
    """
    _require_model(model)
    if int(n_samples) < 1:
        raise InputError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    if grid is None:
        grid = _sobol(MES_GRID, model.dim, rng)
    mu, var = model.predict_standardized(grid)
    sigma = np.sqrt(np.maximum(var, 0.0))
    incumbent = float(np.max(model.train_targets))
    out = _gumbel_from_quantiles(mu, sigma, incumbent, int(n_samples), rng)
    return out if standardized else model.unstandardize(out)


class _KgEvaluator:
    """One-step lookahead value of observing at x, with shared fantasy draws."""

    def __init__(self, model, inner_grid, n_fantasies, seed):
        self.model = model
        self.grid = np.atleast_2d(np.asarray(inner_grid, dtype=float))
        p = model.params
        self.mu_grid, _ = model.predict_standardized(self.grid)
        self.best_now = float(np.max(self.mu_grid))
        self.v_grid = solve_triangular(model.chol, kernel_matrix(model.train_inputs, self.grid, p),
                                       lower=True, check_finite=False)
        self.z = np.random.default_rng(seed).standard_normal(int(n_fantasies))

    def __call__(self, X):
        m = self.model
        X = np.atleast_2d(X)
        mu_x, var_x, v_x = m.predict_standardized(X, return_v=True)
        var_x = np.maximum(var_x, 0.0)
        cov = kernel_matrix(self.grid, X, m.params) - self.v_grid.T @ v_x   # (g, n)
        denom = var_x + m.noise_total
        s = np.sqrt(denom)
        # fantasy y - mu = s z; updated mean = mu + cov / denom * (y - mu)
        slope = cov / s                                           # (g, n)
        new_grid = self.mu_grid[:, None, None] + slope[:, :, None] * self.z[None, None, :]
        new_x = mu_x[:, None] + (var_x / s)[:, None] * self.z[None, :]
        best = np.maximum(new_grid.max(axis=0), new_x)            # (n, F)
        return best.mean(axis=1) - np.maximum(self.best_now, mu_x)


def kg(model, x, n_fantasies=KG_FANTASIES, inner_grid=None, seed=0):
    """Knowledge-gradient value at ``x`` (one-step lookahead, Monte Carlo).

    Fantasy observations ``y ~ N(mu(x), sigma^2(x) + noise)`` update the
    posterior mean by a rank-one correction; the value is the mean gain in
    the maximum posterior mean over ``inner_grid`` plus ``x`` itself.
    """
    _require_model(model)
    if model.dim > KG_MAX_DIM:
        raise ConfigError(f"KG is limited to d <= {KG_MAX_DIM}, got d = {model.dim}")
    if int(n_fantasies) < 2:
        raise InputError("n_fantasies must be >= 2")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if inner_grid is None:
        inner_grid = _sobol(KG_GRID, model.dim, np.random.default_rng(seed))
    ev = _KgEvaluator(model, inner_grid, n_fantasies, seed)
    val = ev(np.atleast_2d(x)) * model.target_std
    return float(val[0]) if single else val


# --- candidate generation ---------------------------------------------------------

def full_bounds(d):
    return np.array([np.zeros(d), np.ones(d)])


def _check_bounds(bounds, d=None):
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[0] != 2 or b.shape[1] == 0:
        raise InputError("bounds must have shape (2, d)")
    if d is not None and b.shape[1] != d:
        raise InputError(f"bounds have dimension {b.shape[1]}, expected {d}")
    lo, hi = b
    if not (np.all(np.isfinite(b)) and np.all(lo <= hi)):
        raise InputError("bounds are empty or inverted")
    if np.any(lo < -1e-12) or np.any(hi > 1 + 1e-12):
        raise InputError("bounds must lie inside the unit cube")
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def raasp_candidates(incumbent, n, d, rng, return_mask=False):
    """Candidates concentrated around ``incumbent`` by sparse perturbation.

    Each candidate is, with probability ``min(1, 20/d)``, a copy of the
    incumbent whose coordinates are each resampled (again with probability
    ``min(1, 20/d)``) from a normal centred on the incumbent value with
    sigma 0.2, truncated to [0, 1]; otherwise it is a uniform draw.
    """
    inc = np.asarray(incumbent, dtype=float).reshape(-1)
    if inc.shape[0] != d:
        raise InputError(f"incumbent has dimension {inc.shape[0]}, expected {d}")
    if np.any(inc < 0) or np.any(inc > 1):
        raise InputError("incumbent must lie in the unit cube")
    p = min(1.0, 20.0 / d)
    local = rng.random(n) < p
    out = rng.random((n, d))
    perturb = (rng.random((n, d)) < p) & local[:, None]
    base = np.broadcast_to(inc, (n, d))
    a = (0.0 - base) / RAASP_SIGMA
    b = (1.0 - base) / RAASP_SIGMA
    draws = truncnorm.rvs(a, b, loc=base, scale=RAASP_SIGMA, size=(n, d), random_state=rng)
    cand = np.where(perturb, np.clip(draws, 0.0, 1.0), base)
    out[local] = cand[local]
    return (out, local) if return_mask else out


# --- trust region -------------------------------------------------------------------

@dataclass(frozen=True)
class TrustRegionState:
    length: float = TR_L_INIT
    success_count: int = 0
    failure_count: int = 0
    center: Optional[tuple] = None
    failure_tol: int = 4
    restarts: int = 0


def tr_init(d, q=1, center=None):
    tol = math.ceil(max(4.0, float(d)) / q)
    c = None if center is None else tuple(np.asarray(center, dtype=float).tolist())
    return TrustRegionState(TR_L_INIT, 0, 0, c, tol, 0)


def tr_update(state, improved, incumbent=None):
    """Advance the trust-region counters after one iteration.

    ``incumbent`` (the best point so far), if given, becomes the new
    centre. A side length that falls below ``2**-7`` triggers a restart
    at length 0.8.
    """
    L = state.length
    succ, fail = state.success_count, state.failure_count
    if improved:
        succ, fail = succ + 1, 0
    else:
        succ, fail = 0, fail + 1
    if succ >= TR_SUCCESS_TOL:
        L, succ = min(2.0 * L, TR_L_MAX), 0
    elif fail >= state.failure_tol:
        L, fail = L / 2.0, 0
    restarts = state.restarts
    if L < TR_L_MIN:
        L, succ, fail, restarts = TR_L_INIT, 0, 0, restarts + 1
    center = state.center if incumbent is None else \
        tuple(np.asarray(incumbent, dtype=float).tolist())
    return replace(state, length=L, success_count=succ, failure_count=fail,
                   center=center, restarts=restarts)


def tr_bounds(state, lengthscales=None, d=None):
    """Box of side ``L * w_i`` around the centre, clipped to the unit cube.

    ``w`` are the lengthscales normalized to geometric mean one (all ones
    when no lengthscales are given).
    """
    if state.center is None:
        raise InputError("trust region has no centre")
    c = np.asarray(state.center, dtype=float)
    if lengthscales is None:
        w = np.ones_like(c)
    else:
        ls = np.asarray(lengthscales, dtype=float)
        w = ls / math.exp(float(np.mean(np.log(ls))))
    half = 0.5 * state.length * w
    return np.array([np.clip(c - half, 0.0, 1.0), np.clip(c + half, 0.0, 1.0)])


# --- maximization ------------------------------------------------------------------

def _make_af(model, spec, rng):
    """Vectorized acquisition in standardized units and its raw/refine budget."""
    kind = spec.kind
    if kind == "TS":
        f = sample_posterior_function(model, _seed_from(rng))
        return (lambda X: model.standardize(f(X))), N_RAW_TS, N_REFINE_TS
    incumbent = float(np.max(model.train_targets))
    if kind == "KG":
        if model.dim > KG_MAX_DIM:
            raise ConfigError(f"KG is limited to d <= {KG_MAX_DIM}, got d = {model.dim}")
        seed = _seed_from(rng)
        grid = _sobol(KG_GRID, model.dim, np.random.default_rng(seed))
        ev = _KgEvaluator(model, grid, KG_FANTASIES, seed)
        return ev, N_RAW, N_REFINE
    if kind == "MES":
        samples = sample_max_values(model, MES_SAMPLES, _seed_from(rng), standardized=True)

        def af(X):
            mu, var = model.predict_standardized(X)
            return mes(mu, np.maximum(var, 1e-18), samples)
        return af, N_RAW, N_REFINE

    def af(X):
        mu, var = model.predict_standardized(X)
        var = np.maximum(var, 0.0)
        if kind == "EI":
            return ei(mu, var, incumbent)
        if kind == "PI":
            return pi(mu, var, incumbent)
        return ucb(mu, var, spec.beta)
    return af, N_RAW, N_REFINE


def _ascend(af, starts, values, lo, hi, steps=ASCENT_STEPS):
    """Projected forward-difference gradient ascent from several starts."""
    width = hi - lo
    span = np.where(width > 0, width, 1.0)
    h = FD_REL_STEP * span
    X = starts.copy()
    fX = values.copy()
    k, d = X.shape
    step = np.full(k, INITIAL_STEP)
    movable = width > 0
    if not np.any(movable):
        return X, fX
    eye = np.eye(d)
    for _ in range(steps):
        active = step > 1e-9
        if not np.any(active):
            break
        Xa = X[active]
        # forward differences, stepping backwards at the upper face
        back = Xa + h > hi
        delta = np.where(back, -h, h)
        probe = Xa[:, None, :] + eye[None] * delta[:, None, :]
        fp = af(probe.reshape(-1, d)).reshape(-1, d)
        grad = (fp - fX[active][:, None]) / delta
        grad = np.where(movable, grad * span, 0.0)
        norm = np.linalg.norm(grad, axis=1)
        ok = norm > 0
        direction = np.zeros_like(grad)
        direction[ok] = grad[ok] / norm[ok, None]
        trial = np.clip(Xa + step[active][:, None] * direction * span, lo, hi)
        ft = af(trial)
        better = (ft > fX[active]) & ok
        idx = np.flatnonzero(active)
        X[idx[better]] = trial[better]
        fX[idx[better]] = ft[better]
        step[idx[~better]] *= 0.5
    return X, fX


def _pick(cands, values, exclude):
    order = np.argsort(-values, kind="stable")
    if exclude is None or len(exclude) == 0:
        return order[0]
    ex = np.atleast_2d(exclude)
    for i in order:
        if np.min(np.linalg.norm(ex - cands[i], axis=1)) >= DEDUP_TOL:
            return i
    return None


def maximize_af(model, spec, bounds, rng, *, fixed_point=None, incumbent_x=None,
                exclude=None, return_details=False):
    """Return the point in ``bounds`` that maximizes the acquisition function.

    Parameters
    ----------
    model : GpModel or None
        Fitted surrogate (ignored for RS and DM).
    spec : AcquisitionSpec
    bounds : array_like, shape (2, d)
        Lower and upper corners; must lie in the unit cube.
    rng : numpy.random.Generator
    fixed_point : array_like, optional
        The point DM always returns.
    incumbent_x : array_like, optional
        Centre of RAASP candidates; defaults to the best training input.
    exclude : array_like, optional
        Points the result must stay at least 1e-6 away from.
    return_details : bool
        Also return a dict with the raw candidates and their values.
    """
    lo, hi = _check_bounds(bounds)
    d = lo.shape[0]
    details = {}
    if spec.kind == "DM":
        if fixed_point is None:
            raise InputError("DM needs a fixed point")
        x = np.asarray(fixed_point, dtype=float).copy()
        return (x, details) if return_details else x
    if spec.kind == "RS":
        x = lo + rng.random(d) * (hi - lo)
        return (x, details) if return_details else x
    _require_model(model)
    if model.dim != d:
        raise InputError(f"bounds have dimension {d}, model has {model.dim}")
    af, n_raw, n_refine = _make_af(model, spec, rng)

    if RAASP in spec.variant:
        if incumbent_x is None:
            incumbent_x = model.train_inputs[int(np.argmax(model.train_targets))]
        raw = np.clip(raasp_candidates(incumbent_x, n_raw, d, rng), lo, hi)
    else:
        raw = _sobol(n_raw, d, rng, lo, hi)
    raw_vals = np.asarray(af(raw), dtype=float)
    top = np.argsort(-raw_vals, kind="stable")[:n_refine]
    refined, ref_vals = _ascend(af, raw[top], raw_vals[top], lo, hi)

    cands = np.vstack([refined, raw])
    vals = np.concatenate([ref_vals, raw_vals])
    i = _pick(cands, vals, exclude)
    if i is None:
        x = lo + rng.random(d) * (hi - lo)
        best = float(af(x[None])[0])
    else:
        x, best = cands[i].copy(), float(vals[i])
    if return_details:
        details = {"raw": raw, "raw_values": raw_vals, "refined": refined,
                   "refined_values": ref_vals, "value": best}
        return x, details
    return x


def batch_select(model, spec, bounds, q, rng, *, incumbent_x=None):
    """Choose ``q`` points for parallel evaluation.

    EI, UCB and KG use the kriging believer: each chosen point is added to
    the model with its posterior mean as a pseudo-observation before the
    next is chosen. TS maximizes ``q`` independent posterior samples.
    Points closer than 1e-6 to an earlier pick are skipped.
    """
    if spec.kind not in BATCH_KINDS:
        raise ConfigError(f"batching is supported for {', '.join(BATCH_KINDS)}, not {spec.kind}")
    q = int(q)
    if q < 1:
        raise ConfigError("q must be >= 1")
    chosen = []
    m = model
    for _ in range(q):
        x = maximize_af(m, spec, bounds, rng, incumbent_x=incumbent_x,
                        exclude=np.array(chosen) if chosen else None)
        chosen.append(x)
        if spec.kind != "TS" and len(chosen) < q:
            mu, _ = m.predict_standardized(x[None])
            m = m.condition_on(x, float(mu[0]), standardized=True)
    return chosen
