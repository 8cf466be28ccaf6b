import numpy as np
import pytest

from oracles import dense_posterior_precision
from slem import (ConfigError, CovParams, GridSpec, NumericalError,
                  estimate_intensity, intensity_mean, inverse_base_row,
                  local_variance, quasi_matern_spectrum, recover_z)


def posterior_instance(n1, n2, eta=CovParams(1.5, 3.0), seed=0):
    grid = GridSpec.unit(n1, n2)
    f = quasi_matern_spectrum(eta, grid)
    psi = 0.3 + np.random.default_rng(seed).random(grid.n)
    return grid, f, psi


def dense_diag_inv(f, psi):
    return np.diag(np.linalg.inv(dense_posterior_precision(f, psi)))


# ---------------------------------------------------------------------------
# latent recovery
# ---------------------------------------------------------------------------


def test_recover_z_without_design_copies():
    W = np.arange(4.0)
    z = recover_z(W, None, np.zeros(0))
    np.testing.assert_array_equal(z, W)
    z[0] = 99.0
    assert W[0] == 0.0


def test_recover_z_empty_beta_copies():
    W = np.arange(4.0)
    np.testing.assert_array_equal(recover_z(W, np.ones((4, 1)), np.zeros(0)), W)


def test_recover_z_subtracts_linear_predictor():
    rng = np.random.default_rng(1)
    W = rng.standard_normal(12)
    X = np.column_stack([np.ones(12), rng.standard_normal(12)])
    beta = np.array([0.4, -1.1])
    np.testing.assert_allclose(recover_z(W, X, beta), W - X @ beta, atol=1e-15)


# ---------------------------------------------------------------------------
# local variance
# ---------------------------------------------------------------------------


def test_local_variance_k1_closed_form():
    # 1 x 1 neighborhood: var_i = 1 / (Sigma^{-1}_{ii} + psi_i)
    grid, f, psi = posterior_instance(6, 6)
    prior_diag = inverse_base_row(f)[0]
    np.testing.assert_allclose(local_variance(f, psi, k=1), 1.0 / (prior_diag + psi),
                               rtol=1e-10)


def test_local_variance_full_neighborhood_is_exact():
    grid, f, psi = posterior_instance(7, 7, seed=2)
    got = local_variance(f, psi, k=7)
    np.testing.assert_allclose(got, dense_diag_inv(f, psi), rtol=1e-8)


def test_local_variance_tight_prior_is_tiny():
    grid, f, psi = posterior_instance(6, 6, eta=CovParams(1e-6, 3.0))
    assert np.all(local_variance(f, psi, k=5) < 1e-3)


def test_local_variance_error_shrinks_with_k():
    grid, f, psi = posterior_instance(8, 8, seed=3)
    truth = dense_diag_inv(f, psi)
    errs = [np.max(np.abs(local_variance(f, psi, k=k) - truth)) for k in (1, 3, 5, 7)]
    assert all(b <= a + 1e-14 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0]


def test_local_variance_constant_curvature_is_translation_invariant():
    # constant psi keeps the torus symmetry, so every pixel sees the same
    # neighborhood problem; edges must match the interior exactly
    grid, f, _ = posterior_instance(8, 6)
    lv = local_variance(f, np.full(grid.n, 0.7), k=5)
    assert np.ptp(lv) < 1e-12 * lv[0]


@pytest.mark.parametrize("k", [0, 2, 4, 9])
def test_local_variance_rejects_bad_k(k):
    grid, f, psi = posterior_instance(6, 6)
    with pytest.raises(ConfigError):
        local_variance(f, psi, k=k)


def test_local_variance_rejects_bad_psi():
    grid, f, psi = posterior_instance(6, 6)
    with pytest.raises(ConfigError):
        local_variance(f, psi[:-1], k=3)
    bad = psi.copy()
    bad[0] = -0.1
    with pytest.raises(NumericalError):
        local_variance(f, bad, k=3)
    bad[0] = np.nan
    with pytest.raises(NumericalError):
        local_variance(f, bad, k=3)


def test_local_variance_positive_and_below_prior():
    # adding data curvature can only shrink the variance below the prior's
    grid, f, psi = posterior_instance(6, 6, seed=4)
    lv = local_variance(f, psi, k=5)
    prior_var = local_variance(f, np.zeros(grid.n), k=5)
    assert np.all(lv > 0)
    assert np.all(lv <= prior_var + 1e-12)


# ---------------------------------------------------------------------------
# intensity summaries
# ---------------------------------------------------------------------------


def test_intensity_mean_zero_variance():
    rng = np.random.default_rng(5)
    z = rng.standard_normal(9)
    X = np.column_stack([np.ones(9), rng.standard_normal(9)])
    beta = np.array([0.2, 0.5])
    np.testing.assert_allclose(intensity_mean(z, np.zeros(9), X, beta),
                               np.exp(X @ beta + z), rtol=1e-12)


def test_intensity_mean_latent_only_constant():
    got = intensity_mean(np.zeros(4), np.full(4, 2.0), None, np.zeros(0))
    np.testing.assert_allclose(got, np.full(4, np.e), rtol=1e-12)


def test_intensity_mean_large_mode_is_finite():
    out = intensity_mean(np.full(3, 500.0), np.ones(3), None, np.zeros(0))
    assert np.all(np.isfinite(out))


def test_estimate_intensity_composition():
    grid, f, _ = posterior_instance(8, 8, seed=6)
    rng = np.random.default_rng(7)
    W = rng.standard_normal(grid.n)
    X = np.column_stack([np.ones(grid.n), rng.standard_normal(grid.n)])
    beta = np.array([0.3, -0.4])
    delta = grid.delta()

    est = estimate_intensity(W, X, beta, f, delta, k=5)
    z = W - X @ beta
    lv = local_variance(f, delta * np.exp(W), k=5)
    np.testing.assert_allclose(est.z_mode, z, atol=1e-15)
    np.testing.assert_allclose(est.local_var, lv, rtol=1e-12)
    np.testing.assert_allclose(est.latent_mean, np.exp(z + 0.5 * lv), rtol=1e-12)
    np.testing.assert_allclose(est.intensity, np.exp(X @ beta) * est.latent_mean,
                               rtol=1e-12)
    assert np.all(est.latent_mean >= np.exp(est.z_mode))


def test_estimate_intensity_without_design():
    grid, f, _ = posterior_instance(6, 6, seed=8)
    W = np.random.default_rng(9).standard_normal(grid.n)
    est = estimate_intensity(W, None, np.zeros(0), f, grid.delta(), k=3)
    np.testing.assert_array_equal(est.z_mode, W)
    np.testing.assert_allclose(est.intensity, est.latent_mean, rtol=1e-15)
