"""Gaussian-process surrogate with a Matérn-5/2 ARD kernel.

Targets are standardized before fitting; inputs are expected in the unit
cube. Hyperparameters are fitted by multi-start L-BFGS-B on the log
marginal likelihood with analytic gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, squareform

from .errors import InputError, ModelFitError, NotFittedError

__all__ = [
    "KernelParams",
    "GpModel",
    "kernel",
    "kernel_matrix",
    "log_marginal_likelihood",
    "condition",
    "fit",
    "predict",
    "sample_posterior_function",
]

SQRT5 = math.sqrt(5.0)

LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (1e-6, 1.0)

N_STARTS = 8
MAX_ITER = 100
JITTER_START = 1e-8
JITTER_MAX = 1e-2
N_FEATURES = 500


@dataclass(frozen=True)
class KernelParams:
    lengthscales: tuple
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", tuple(ls.tolist()))
        lo, hi = LENGTHSCALE_BOUNDS
        if np.any(ls < lo * (1 - 1e-9)) or np.any(ls > hi * (1 + 1e-9)):
            raise InputError(f"lengthscales must lie in [{lo}, {hi}]")
        if not self.signal_variance > 0:
            raise InputError("signal variance must be positive")
        if self.noise_variance < NOISE_BOUNDS[0] * (1 - 1e-9):
            raise InputError(f"noise variance must be >= {NOISE_BOUNDS[0]}")

    @property
    def dim(self):
        return len(self.lengthscales)

    @property
    def ls(self):
        return np.asarray(self.lengthscales)

    def to_log(self):
        return np.concatenate([np.log(self.ls),
                               [math.log(self.signal_variance), math.log(self.noise_variance)]])

    @classmethod
    def from_log(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(tuple(np.exp(theta[:-2])), float(np.exp(theta[-2])),
                   float(np.exp(theta[-1])))


def _matern_from_r(r, sig2):
    sr = SQRT5 * r
    return sig2 * (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


def kernel_matrix(X1, X2, params):
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    ls = params.ls
    r = cdist(X1 / ls, X2 / ls)
    return _matern_from_r(r, params.signal_variance)


def kernel(x, x2, params):
    """Matérn-5/2 ARD covariance between two points."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise InputError("kernel inputs must be finite")
    if x.shape != x2.shape or x.shape[0] != params.dim:
        raise InputError(f"kernel expects two {params.dim}-vectors")
    r = math.sqrt(float((((x - x2) / params.ls) ** 2).sum()))
    return float(_matern_from_r(r, params.signal_variance))


def _cholesky_with_jitter(K):
    """Cholesky factor of ``K``, adding diagonal jitter 1e-8 ... 1e-2 on failure."""
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START
    n = len(K)
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            jitter *= 10
    raise ModelFitError(f"kernel matrix not positive definite after jitter {JITTER_MAX:g}")


@dataclass(frozen=True)
class GpModel:
    """Fitted GP. Immutable; ``condition_on`` returns a new model.

    ``train_targets`` are standardized; ``target_mean``/``target_std``
    map them back. ``chol`` factors ``K + (noise + jitter) I``.
    """

    params: KernelParams
    train_inputs: Optional[np.ndarray] = None
    train_targets: Optional[np.ndarray] = None
    target_mean: float = 0.0
    target_std: float = 1.0
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)
    jitter: float = 0.0

    @property
    def fitted(self):
        return self.chol is not None

    @property
    def dim(self):
        return self.params.dim

    @property
    def n(self):
        return 0 if self.train_inputs is None else len(self.train_inputs)

    @property
    def noise_total(self):
        return self.params.noise_variance + self.jitter

    def _check(self):
        if not self.fitted:
            raise NotFittedError("GP model has not been fitted")

    def standardize(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def unstandardize(self, y):
        return self.target_mean + self.target_std * np.asarray(y)

    def _as_query(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != self.dim:
            raise InputError(f"query points must have dimension {self.dim}")
        return X

    def predict_standardized(self, X, return_v=False):
        """Posterior mean/variance of the standardized latent function."""
        self._check()
        X = self._as_query(X)
        Ks = kernel_matrix(X, self.train_inputs, self.params)
        mu = Ks @ self.alpha
        v = solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        var = self.params.signal_variance - np.einsum("ij,ij->j", v, v)
        if return_v:
            return mu, var, v
        return mu, var

    def predict(self, X):
        """De-standardized posterior mean and variance (clamped at 0)."""
        mu, var = self.predict_standardized(X)
        return self.unstandardize(mu), np.maximum(var, 0.0) * self.target_std ** 2

    def posterior_cov_standardized(self, Xa, Xb):
        self._check()
        Xa, Xb = self._as_query(Xa), self._as_query(Xb)
        va = solve_triangular(self.chol, kernel_matrix(self.train_inputs, Xa, self.params),
                              lower=True, check_finite=False)
        vb = solve_triangular(self.chol, kernel_matrix(self.train_inputs, Xb, self.params),
                              lower=True, check_finite=False)
        return kernel_matrix(Xa, Xb, self.params) - va.T @ vb

    def condition_on(self, x, y, standardized=False):
        """Add one observation without refitting hyperparameters.

        The Cholesky factor is extended by one row (O(n^2)); target
        standardization constants are kept fixed.
        """
        self._check()
        x = self._as_query(x)[0]
        ys = float(y) if standardized else float(self.standardize(y))
        kvec = kernel_matrix(self.train_inputs, x[None, :], self.params)[:, 0]
        l = solve_triangular(self.chol, kvec, lower=True, check_finite=False)
        d2 = self.params.signal_variance + self.noise_total - float(l @ l)
        lnn = math.sqrt(max(d2, 1e-12 * self.params.signal_variance))
        n = self.n
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.chol
        L[n, :n] = l
        L[n, n] = lnn
        yt = np.append(self.train_targets, ys)
        alpha = cho_solve((L, True), yt, check_finite=False)
        return replace(self, train_inputs=np.vstack([self.train_inputs, x]),
                       train_targets=yt, chol=L, alpha=alpha)


def _check_data(inputs, targets):
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(targets, dtype=float).reshape(-1)
    if len(X) != len(y):
        raise InputError(f"{len(X)} inputs but {len(y)} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("training data must be finite")
    return X, y


def condition(inputs, targets, params, target_mean=None, target_std=None):
    """Build a GP posterior for fixed hyperparameters.

    Targets are standardized with their own mean/std unless constants are
    given. Raises ``ModelFitError`` if factorization fails after jitter
    escalation.
    """
    X, y = _check_data(inputs, targets)
    if X.shape[1] != params.dim:
        raise InputError(f"inputs have dimension {X.shape[1]}, kernel expects {params.dim}")
    if target_mean is None:
        target_mean = float(y.mean())
    if target_std is None:
        s = float(y.std())
        target_std = s if s > 1e-12 * max(1.0, abs(target_mean)) else 1.0
    ys = (y - target_mean) / target_std
    K = kernel_matrix(X, X, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    L, jitter = _cholesky_with_jitter(K)
    alpha = cho_solve((L, True), ys, check_finite=False)
    return GpModel(params, X, ys, target_mean, target_std, L, alpha, jitter)


class _LmlProblem:
    """Negative log marginal likelihood and gradient in log-parameters.

    Works on the condensed upper triangle of pairwise quantities, which
    halves the elementwise work per evaluation.
    """

    def __init__(self, X, y):
        self.X, self.y = X, y
        self.n, self.d = X.shape
        self.iu, self.ju = np.triu_indices(self.n, 1)
        # per-dimension squared differences, reused by every evaluation
        self.sq = np.ascontiguousarray(((X[self.iu] - X[self.ju]) ** 2).T)

    def __call__(self, theta):
        d, n = self.d, self.n
        inv_ls2 = np.exp(-2 * theta[:d])
        sig2 = math.exp(theta[d])
        noise = math.exp(theta[d + 1])
        sr = inv_ls2 @ self.sq
        np.sqrt(sr, out=sr)
        sr *= SQRT5
        e = np.exp(-sr)
        kf = sr * sr
        kf *= 1.0 / 3.0
        kf += sr
        kf += 1.0
        kf *= e
        kf *= sig2
        K = squareform(kf, checks=False)
        K.flat[:: n + 1] = sig2 + noise
        L, info = lapack.dpotrf(K, lower=1, clean=0, overwrite_a=1)
        if info != 0:
            return 1e25, np.zeros_like(theta)
        alpha, _ = lapack.dpotrs(L, self.y, lower=1)
        lml = -0.5 * self.y @ alpha - np.log(np.diagonal(L)).sum() - 0.5 * n * math.log(2 * math.pi)
        Kinv, info = lapack.dpotri(L, lower=1, overwrite_c=1)
        if info != 0:
            return 1e25, np.zeros_like(theta)
        # W = alpha alpha^T - K^-1, off-diagonal (each pair counted twice) and diagonal
        w = alpha[self.iu] * alpha[self.ju]
        w -= Kinv[self.ju, self.iu]
        wdiag_sum = float(alpha @ alpha - np.diagonal(Kinv).sum())
        c = sr + 1.0
        c *= e
        c *= (5.0 / 3.0) * sig2
        c *= w
        grad = np.empty_like(theta)
        grad[:d] = inv_ls2 * (self.sq @ c)
        grad[d] = float(w @ kf) + 0.5 * sig2 * wdiag_sum
        grad[d + 1] = 0.5 * noise * wdiag_sum
        return -lml, -grad


def log_marginal_likelihood(params, inputs, targets, return_grad=False):
    """Log marginal likelihood of (already standardized) targets.

    The gradient is with respect to ``params.to_log()``.
    """
    X, y = _check_data(inputs, targets)
    neg, neg_grad = _LmlProblem(X, y)(params.to_log())
    if neg >= 1e25:
        raise ModelFitError("kernel matrix not positive definite")
    return (-neg, -neg_grad) if return_grad else -neg


def _log_bounds(d):
    lo = [math.log(LENGTHSCALE_BOUNDS[0])] * d + [math.log(SIGNAL_BOUNDS[0]),
                                                  math.log(NOISE_BOUNDS[0])]
    hi = [math.log(LENGTHSCALE_BOUNDS[1])] * d + [math.log(SIGNAL_BOUNDS[1]),
                                                  math.log(NOISE_BOUNDS[1])]
    return np.array(lo), np.array(hi)


def initial_params(d):
    """Heuristic start: lengthscale 0.5 sqrt(d), unit signal, small noise."""
    ls = min(max(0.5 * math.sqrt(d), LENGTHSCALE_BOUNDS[0]), LENGTHSCALE_BOUNDS[1])
    return KernelParams((ls,) * d, 1.0, 1e-3)


def _random_starts(d, n, rng):
    ls = np.exp(rng.uniform(math.log(0.05), math.log(5.0), (n, d)))
    sig = np.exp(rng.uniform(math.log(0.1), math.log(10.0), (n, 1)))
    noise = np.exp(rng.uniform(math.log(1e-6), math.log(1e-1), (n, 1)))
    return np.log(np.hstack([ls, sig, noise]))


def fit(inputs, targets, seed=0, n_starts=N_STARTS, max_iter=MAX_ITER):
    """Fit hyperparameters by maximizing the log marginal likelihood.

    Parameters
    ----------
    inputs : array_like, shape (n, d)
        Training inputs in the unit cube, ``n >= 2``.
    targets : array_like, shape (n,)
    seed : int
        Seeds the random restarts; equal seeds give identical models.
    n_starts : int
        Number of local searches: one from ``initial_params`` and the rest
        log-uniform random.

    Returns
    -------
    GpModel
    """
    X, y = _check_data(inputs, targets)
    if len(X) < 2:
        raise InputError("need at least 2 observations to fit a GP")
    d = X.shape[1]
    mean = float(y.mean())
    std = float(y.std())
    if not std > 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    ys = (y - mean) / std

    problem = _LmlProblem(X, ys)
    lo, hi = _log_bounds(d)
    rng = np.random.default_rng(seed)
    starts = np.vstack([initial_params(d).to_log()[None, :],
                        _random_starts(d, n_starts - 1, rng)])
    best_theta, best_val = None, np.inf
    for theta0 in starts:
        theta0 = np.clip(theta0, lo, hi)
        res = minimize(problem, theta0, jac=True, method="L-BFGS-B",
                       bounds=list(zip(lo, hi)), options={"maxiter": max_iter})
        if res.fun < best_val and np.all(np.isfinite(res.x)):
            best_theta, best_val = res.x, res.fun
    if best_theta is None or best_val >= 1e25:
        raise ModelFitError("marginal likelihood could not be evaluated at any start")
    params = KernelParams.from_log(np.clip(best_theta, lo, hi))
    return condition(X, y, params, target_mean=mean, target_std=std)


def predict(model, x):
    """Posterior mean and variance at ``x`` (a point or an (n, d) batch)."""
    if not isinstance(model, GpModel) or not model.fitted:
        raise NotFittedError("GP model has not been fitted")
    mu, var = model.predict(x)
    if np.ndim(x) == 1:
        return float(mu[0]), float(var[0])
    return mu, var


def sample_posterior_function(model, seed, n_features=N_FEATURES):
    """Approximate posterior sample path via random Fourier features.

    A prior path is drawn from the Matérn-5/2 spectral density (Student-t
    frequencies with 5 degrees of freedom) and corrected with the pathwise
    update ``f(x) + k(x, X) (K + s I)^-1 (y - f(X) - eps)``. The returned
    callable maps an (n, d) array (or one point) to de-standardized values
    and is deterministic for a given ``seed``.
    """
    if not isinstance(model, GpModel) or not model.fitted:
        raise NotFittedError("GP model has not been fitted")
    rng = np.random.default_rng(seed)
    d, M = model.dim, int(n_features)
    p = model.params
    g = rng.chisquare(5.0, size=(M, 1))
    omega = rng.standard_normal((M, d)) * np.sqrt(5.0 / g) / p.ls
    phase = rng.uniform(0.0, 2 * math.pi, M)
    w = rng.standard_normal(M)
    scale = math.sqrt(2.0 * p.signal_variance / M)
    X = model.train_inputs
    noise = rng.standard_normal(model.n) * math.sqrt(model.noise_total)

    def prior(Z):
        return scale * np.cos(Z @ omega.T + phase) @ w

    v = cho_solve((model.chol, True), model.train_targets - prior(X) - noise,
                  check_finite=False)

    def sample(Z):
        Z = np.asarray(Z, dtype=float)
        single = Z.ndim == 1
        Z = np.atleast_2d(Z)
        f = prior(Z) + kernel_matrix(Z, X, p) @ v
        out = model.unstandardize(f)
        return float(out[0]) if single else out

    return sample
