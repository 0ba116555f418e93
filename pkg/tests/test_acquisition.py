import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from boexplore.acquisition import (
    RAASP,
    TRUST_REGION,
    AcquisitionSpec,
    TrustRegionState,
    batch_select,
    ei,
    full_bounds,
    kg,
    maximize_af,
    mes,
    pi,
    raasp_candidates,
    sample_max_values,
    tr_bounds,
    tr_init,
    tr_update,
    ucb,
)
from boexplore.errors import ConfigError, InputError, NotFittedError
from boexplore.metrics import ObservationTrace, otsd_normalized, otsd_series
from boexplore.surrogate import GpModel, KernelParams, condition, fit


def toy_model(seed=0, n=10, d=2, noise=1e-4, ls=0.3):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.sin(5 * X).sum(1) + X[:, 0]
    return condition(X, y, KernelParams((ls,) * d, 1.0, noise))


def stratified_normals(n, rng):
    """Normal draws with one uniform per stratum of [0, 1)."""
    u = (np.arange(n) + rng.random(n)) / n
    return norm.ppf(u)


# --- closed forms -----------------------------------------------------------------

def test_ei_at_incumbent_is_pdf_at_zero():
    assert ei(2.0, 1.0, 2.0) == pytest.approx(0.3989422804014327, abs=1e-12)
    assert ei(2.0, 1.0, 2.0) == pytest.approx(0.39894, abs=5e-6)


def test_ei_degenerate_sigma():
    assert ei(0.5, 0.0, 1.0) == 0.0
    assert ei(1.5, 0.0, 1.0) == 0.5


def test_ei_matches_monte_carlo_1e6():
    rng = np.random.default_rng(0)
    mu, s, inc = 0.3, 1.7, 1.0
    imp = np.maximum(mu + s * rng.standard_normal(10**6) - inc, 0.0)
    se = imp.std(ddof=1) / math.sqrt(imp.size)
    assert abs(imp.mean() - ei(mu, s * s, inc)) <= 3 * se


def test_pi_values():
    assert pi(1.0, 4.0, 1.0) == 0.5
    assert pi(1.6449, 1.0, 0.0) == pytest.approx(0.95, abs=1e-4)
    assert pi(1.0, 0.0, 0.5) == 1.0 and pi(0.5, 0.0, 1.0) == 0.0


def test_pi_matches_monte_carlo_1e6():
    rng = np.random.default_rng(1)
    mu, s, inc = -0.4, 0.8, 0.1
    hits = (mu + s * rng.standard_normal(10**6)) > inc
    se = hits.std(ddof=1) / math.sqrt(hits.size)
    assert abs(hits.mean() - pi(mu, s * s, inc)) <= 3 * se


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_ei_pi_monte_carlo_agreement(mu, s, inc, seed):
    # Stratified draws; the tolerance is the plain-MC standard error under the
    # closed-form moments, a conservative bound for the stratified estimator.
    y = mu + s * stratified_normals(10**6, np.random.default_rng(seed))
    n = y.size
    e, p = ei(mu, s * s, inc), pi(mu, s * s, inc)
    z = (mu - inc) / s
    second = ((mu - inc) ** 2 + s * s) * norm.cdf(z) + (mu - inc) * s * norm.pdf(z)
    se_ei = math.sqrt(max(second - e * e, 0.0) / n)
    se_pi = math.sqrt(p * (1 - p) / n)
    assert abs(np.maximum(y - inc, 0.0).mean() - e) <= 3 * se_ei + 1e-15
    assert abs((y > inc).mean() - p) <= 3 * se_pi + 1e-15


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 100), st.floats(-50, 50))
def test_af_ranges_and_ei_pi_inequality(mu, s2, inc):
    e, p = ei(mu, s2, inc), pi(mu, s2, inc)
    assert e >= 0 and 0 <= p <= 1
    if mu > inc:
        assert e >= (mu - inc) * p - 1e-12 * max(1.0, abs(mu), abs(inc))
    if s2 > 0:
        assert mes(mu, s2, [max(mu, inc) + 0.1]) >= 0


def test_ucb_arithmetic_and_shift_invariance():
    assert ucb(1.3, 2.0, 0.0) == 1.3
    assert ucb(1.0, 4.0, 4.0) == 5.0
    rng = np.random.default_rng(2)
    mu, s2 = rng.normal(size=50), rng.random(50)
    assert np.argmax(ucb(mu, s2, 2.0)) == np.argmax(ucb(mu + 17.0, s2, 2.0))


def test_ei_argmax_shift_invariance():
    rng = np.random.default_rng(3)
    mu, s2 = rng.normal(size=200), rng.random(200)
    assert np.argmax(ei(mu, s2, 0.7)) == np.argmax(ei(mu + 5.0, s2, 5.7))


def test_closed_forms_reject_negative_variance():
    with pytest.raises(InputError):
        ei(0.0, -1.0, 0.0)
    with pytest.raises(InputError):
        ucb(0.0, 1.0, -1.0)


def test_mes_at_gamma_zero():
    # gamma * pdf(gamma) vanishes at 0, leaving -log(1/2)
    assert mes(0.0, 1.0, [0.0]) == pytest.approx(math.log(2.0), abs=1e-12)
    assert mes(0.0, 1.0, [0.0]) == pytest.approx(0.693147, abs=1e-6)


def test_mes_vanishes_for_unreachable_max():
    assert mes(0.0, 1.0, [40.0]) < 1e-12


def test_mes_monotone_in_gamma():
    g = np.linspace(0, 6, 601)
    vals = np.array([mes(0.0, 1.0, [gi]) for gi in g])
    assert np.all(np.diff(vals) < 0)


def test_mes_averages_samples_and_rejects_empty():
    assert mes(0.0, 1.0, [0.0, 1.0]) == pytest.approx(0.5 * (mes(0.0, 1.0, [0.0]) + mes(0.0, 1.0, [1.0])))
    with pytest.raises(InputError):
        mes(0.0, 1.0, [])


# --- max-value sampling -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_max_values_not_below_incumbent(seed):
    m = toy_model(seed)
    s = sample_max_values(m, 50, seed=seed)
    assert np.all(s >= m.unstandardize(m.train_targets.max()) - 1e-12)


def test_max_values_collapsed_posterior():
    X = np.random.default_rng(4).random((40, 1))
    m = condition(X, np.sin(6 * X[:, 0]), KernelParams((0.5,), 1.0, 1e-6))
    grid = X
    s = sample_max_values(m, 200, seed=0, grid=grid)
    mu, var = m.predict(grid)
    assert var.max() < 1e-6
    np.testing.assert_allclose(s, mu.max(), atol=5e-3)


def test_max_values_median_against_joint_oracle():
    X = np.array([[0.05, 0.05], [0.1, 0.9], [0.9, 0.1], [0.95, 0.95],
                  [0.5, 0.05], [0.05, 0.5], [0.95, 0.5], [0.5, 0.95]])
    y = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -10.0])
    m = condition(X, y, KernelParams((0.2, 0.2), 1.0, 1e-4))
    grid = np.array([[0.3, 0.3], [0.7, 0.3], [0.3, 0.7], [0.7, 0.7], [0.5, 0.5]])
    ours = sample_max_values(m, 10**4, seed=0, grid=grid)

    mu, _ = m.predict(grid)
    cov = m.posterior_cov_standardized(grid, grid) * m.target_std ** 2
    joint = np.random.default_rng(1).multivariate_normal(mu, cov, size=10**5, method="cholesky")
    incumbent = m.unstandardize(m.train_targets.max())
    oracle = np.maximum(joint.max(1), incumbent)
    q25, q75 = np.quantile(oracle, [0.25, 0.75])
    assert q25 <= np.median(ours) <= q75


# --- knowledge gradient ----------------------------------------------------------------

def kg_oracle(model, x, n_fantasies, grid, seed):
    """KG by refitting the full Cholesky once per fantasy."""
    z = np.random.default_rng(seed).standard_normal(n_fantasies)
    pts = np.vstack([grid, x])
    mu_x, var_x = model.predict_standardized(x[None])
    base = model.unstandardize(model.predict_standardized(pts)[0]).max()
    gains = []
    for zf in z:
        ys = mu_x[0] + math.sqrt(max(var_x[0], 0.0) + model.noise_total) * zf
        X2 = np.vstack([model.train_inputs, x])
        y2 = model.unstandardize(np.append(model.train_targets, ys))
        refit = condition(X2, y2, model.params, target_mean=model.target_mean,
                          target_std=model.target_std)
        gains.append(refit.predict(pts)[0].max())
    return float(np.mean(gains) - base)


@pytest.mark.parametrize("seed", range(5))
def test_kg_matches_full_refit(seed):
    m = toy_model(seed, n=10, noise=1e-3)
    rng = np.random.default_rng(seed + 100)
    grid = rng.random((64, 2))
    x = rng.random(2)
    assert kg(m, x, 8, grid, seed=seed) == pytest.approx(kg_oracle(m, x, 8, grid, seed), abs=1e-6)


def test_kg_zero_at_training_point():
    m = toy_model(5, n=12, noise=1e-6)
    val = kg(m, m.train_inputs[3], 8, np.random.default_rng(0).random((256, 2)), seed=0)
    assert abs(val) <= 1e-3 * m.target_std


def test_kg_deterministic_and_dimension_limit():
    m = toy_model(6)
    x = np.array([0.4, 0.6])
    assert kg(m, x, seed=3) == kg(m, x, seed=3)
    big = toy_model(0, n=12, d=11)
    with pytest.raises(ConfigError):
        kg(big, np.full(11, 0.5))
    with pytest.raises(InputError):
        kg(m, x, n_fantasies=1)


# --- maximization ---------------------------------------------------------------------

@pytest.mark.parametrize("kind,beta", [("EI", None), ("PI", None), ("UCB", 2.0),
                                       ("MES", None), ("TS", None), ("KG", None)])
def test_maximize_not_worse_than_any_raw_candidate(kind, beta):
    m = toy_model(7, n=15)
    rng = np.random.default_rng(0)
    x, det = maximize_af(m, AcquisitionSpec(kind, beta), full_bounds(2), rng, return_details=True)
    assert det["value"] >= det["raw_values"].max()
    assert len(det["raw"]) == (1024 if kind == "TS" else 512)
    assert np.all((x >= 0) & (x <= 1))


def test_maximize_respects_box():
    m = toy_model(8)
    box = np.array([[0.2, 0.5], [0.3, 0.9]])
    for kind, beta in [("EI", None), ("UCB", 1.0), ("RS", None), ("TS", None)]:
        for s in range(5):
            x = maximize_af(m, AcquisitionSpec(kind, beta), box, np.random.default_rng(s))
            assert np.all(x >= box[0]) and np.all(x <= box[1])


def test_maximize_rejects_bad_bounds_and_unfitted():
    m = toy_model(0)
    spec = AcquisitionSpec("EI")
    with pytest.raises(InputError):
        maximize_af(m, spec, np.array([[0.5, 0.5], [0.4, 1.0]]), np.random.default_rng(0))
    with pytest.raises(InputError):
        maximize_af(m, spec, np.array([[0.0, 0.0], [1.0, 1.5]]), np.random.default_rng(0))
    with pytest.raises(NotFittedError):
        maximize_af(GpModel(KernelParams((1.0, 1.0))), spec, full_bounds(2), np.random.default_rng(0))


def test_dm_always_returns_fixed_point():
    pt = np.array([0.25, 0.75])
    rng = np.random.default_rng(0)
    for _ in range(5):
        np.testing.assert_array_equal(maximize_af(None, AcquisitionSpec("DM"), full_bounds(2),
                                                  rng, fixed_point=pt), pt)


def test_rs_normalized_otsd_below_one_d10():
    rng = np.random.default_rng(11)
    pts = np.array([maximize_af(None, AcquisitionSpec("RS"), full_bounds(10), rng)
                    for _ in range(200)])
    series = otsd_normalized(ObservationTrace(pts, np.zeros(200)))
    assert np.all(series.values < 1)


def test_ei_selection_invariant_to_target_shift():
    m = toy_model(9)
    shifted = condition(m.train_inputs, m.unstandardize(m.train_targets) + 100.0, m.params)
    a = maximize_af(m, AcquisitionSpec("EI"), full_bounds(2), np.random.default_rng(5))
    b = maximize_af(shifted, AcquisitionSpec("EI"), full_bounds(2), np.random.default_rng(5))
    np.testing.assert_allclose(a, b, atol=1e-8)


def _gp_prior_sample(seed, d=2, ls=0.15, m=400):
    rng = np.random.default_rng(seed)
    g = rng.chisquare(5.0, size=(m, 1))
    om = rng.standard_normal((m, d)) * np.sqrt(5.0 / g) / ls
    ph = rng.uniform(0, 2 * math.pi, m)
    w = rng.standard_normal(m) * math.sqrt(2.0 / m)
    return lambda X: np.cos(np.atleast_2d(X) @ om.T + ph) @ w


def _ucb_loop(f, beta, seed, n0=5, iters=25):
    rng = np.random.default_rng(seed)
    X = rng.random((n0, 2))
    y = f(X)
    spec = AcquisitionSpec("UCB", beta)
    for t in range(iters):
        m = fit(X, y, seed=t)
        x = maximize_af(m, spec, full_bounds(2), rng)
        X = np.vstack([X, x])
        y = np.append(y, f(x))
    return otsd_series(ObservationTrace(X, y)).values[-1]


def test_larger_beta_disperses_observations():
    lo = [_ucb_loop(_gp_prior_sample(s), 1.0, s) for s in range(10)]
    hi = [_ucb_loop(_gp_prior_sample(s), 100.0, s) for s in range(10)]
    assert np.mean(hi) > np.mean(lo)


# --- RAASP ---------------------------------------------------------------------------

def test_raasp_low_dim_all_local():
    inc = np.full(4, 0.3)
    cand, local = raasp_candidates(inc, 1000, 4, np.random.default_rng(0), return_mask=True)
    assert local.all()
    assert np.all((cand >= 0) & (cand <= 1))


def test_raasp_local_fraction_d40():
    inc = np.full(40, 0.5)
    _, local = raasp_candidates(inc, 10**4, 40, np.random.default_rng(1), return_mask=True)
    assert abs(local.mean() - 0.5) <= 3 * math.sqrt(0.25 / 10**4)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_raasp_within_cube(d, seed):
    rng = np.random.default_rng(seed)
    cand = raasp_candidates(rng.random(d), 64, d, rng)
    assert cand.shape == (64, d)
    assert np.all((cand >= 0) & (cand <= 1))


def test_raasp_variant_candidates_stay_in_box():
    m = toy_model(10)
    box = np.array([[0.1, 0.1], [0.4, 0.3]])
    spec = AcquisitionSpec("EI", variant={RAASP})
    _, det = maximize_af(m, spec, box, np.random.default_rng(0), return_details=True)
    assert np.all(det["raw"] >= box[0]) and np.all(det["raw"] <= box[1])


# --- trust region ----------------------------------------------------------------------

def test_tr_three_successes_double():
    s = tr_init(6)
    for _ in range(3):
        s = tr_update(s, True)
    assert s.length == 1.6
    for _ in range(3):
        s = tr_update(s, True)
    assert s.length == 1.6


def test_tr_failure_tolerance_and_restart():
    s = tr_init(6, q=1)
    assert s.failure_tol == 6
    assert tr_init(2, q=8).failure_tol == 1
    s = TrustRegionState(length=2 ** -7 * 1.5, failure_tol=s.failure_tol, center=(0.5,) * 6)
    for _ in range(5):
        s = tr_update(s, False)
    assert s.length == 2 ** -7 * 1.5
    s = tr_update(s, False, incumbent=np.full(6, 0.2))
    assert s.length == 0.8 and s.restarts == 1
    assert s.center == (0.2,) * 6


def test_tr_alternating_keeps_length():
    s = tr_init(4)
    for i in range(40):
        s = tr_update(s, i % 2 == 0)
    assert s.length == 0.8


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.floats(2 ** -7, 1.6), st.integers(0, 2**32 - 1))
def test_tr_box_inside_cube(d, length, seed):
    rng = np.random.default_rng(seed)
    s = TrustRegionState(length=length, center=tuple(rng.random(d)))
    lo, hi = tr_bounds(s, np.exp(rng.uniform(-3, 3, d)))
    assert np.all(lo >= 0) and np.all(hi <= 1) and np.all(lo <= hi)
    assert np.all(lo <= np.asarray(s.center)) and np.all(np.asarray(s.center) <= hi)


def test_tr_box_scaled_by_lengthscales():
    s = TrustRegionState(length=0.4, center=(0.5, 0.5))
    lo, hi = tr_bounds(s, [0.5, 2.0])
    np.testing.assert_allclose(hi - lo, [0.2, 0.8])


# --- batches -------------------------------------------------------------------------

def test_batch_of_one_equals_single_maximization():
    m = toy_model(11)
    spec = AcquisitionSpec("EI")
    a = batch_select(m, spec, full_bounds(2), 1, np.random.default_rng(3))
    b = maximize_af(m, spec, full_bounds(2), np.random.default_rng(3))
    np.testing.assert_array_equal(a[0], b)


def test_believer_update_pins_mean():
    m = toy_model(12)
    x = np.array([0.37, 0.81])
    mu, _ = m.predict_standardized(x[None])
    m2 = m.condition_on(x, float(mu[0]), standardized=True)
    assert m2.predict_standardized(x[None])[0][0] == pytest.approx(mu[0], abs=1e-6)


@pytest.mark.parametrize("kind,beta", [("EI", None), ("UCB", 1.0), ("TS", None), ("KG", None)])
def test_batch_points_distinct(kind, beta):
    m = toy_model(13, n=12)
    pts = np.array(batch_select(m, AcquisitionSpec(kind, beta, q=6), full_bounds(2), 6,
                                np.random.default_rng(0)))
    assert pts.shape == (6, 2)
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(6)
    assert dist.min() >= 1e-6


def test_batch_rejects_unsupported_kind():
    with pytest.raises(ConfigError):
        AcquisitionSpec("PI", q=4)
    with pytest.raises(ConfigError):
        batch_select(toy_model(0), AcquisitionSpec("PI"), full_bounds(2), 4, np.random.default_rng(0))


# --- AcquisitionSpec ------------------------------------------------------------------

def test_spec_validation_and_labels():
    assert AcquisitionSpec("ucb", 0.1).label == "UCB-0.1"
    assert AcquisitionSpec("EI", q=8).label == "EI-q8"
    assert AcquisitionSpec("EI", variant=["TR", "raasp"]).variant_label == "TR+RAASP"
    assert AcquisitionSpec("EI", variant={TRUST_REGION}).variant_label == "TR"
    assert AcquisitionSpec("EI").variant_label == "base"
    with pytest.raises(ConfigError):
        AcquisitionSpec("UCB")
    with pytest.raises(ConfigError):
        AcquisitionSpec("EI", beta=1.0)
    with pytest.raises(ConfigError):
        AcquisitionSpec("XYZ")
    with pytest.raises(ConfigError):
        AcquisitionSpec("EI", q=0)
