import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_gls, dense_q_tilde, dense_sigma_inv
from slem import (CollinearityError, ConfigError, CountGrid, CovParams,
                  FitConfig, GridSpec, ProbePairs, SimScenario, Theta,
                  amplitude_for_variance, fit, flatten, make_probes, q_tilde,
                  quasi_matern_spectrum, sample_gp, simulate_dataset,
                  unflatten, update_beta, update_eta)
from slem.em import _em_stage, profiled_sigma2

GRID6 = GridSpec.unit(6, 6)
PARAM_SETS = [CovParams(1.5, 3.0), CovParams(2.0, 8.0)]


def em_instance(eta_t, seed=0, M=3, p=2):
    """W from the prior, a small design, and tight-solve probe pairs."""
    rng = np.random.default_rng(seed)
    f_t = quasi_matern_spectrum(eta_t, GRID6)
    W = sample_gp(f_t, seed)
    X = np.column_stack([np.ones(GRID6.n)] + [rng.standard_normal(GRID6.n) for _ in range(p)])
    c = 0.2 + rng.random(GRID6.n)
    probes = make_probes(M, GRID6.n, seed, f_t, c, eps_pcg=1e-10)
    return W, X, c, probes


def dense_trace_value(eta_cand, probes, grid):
    Sinv = dense_sigma_inv(quasi_matern_spectrum(eta_cand, grid))
    return float(np.mean([probes.v[i] @ Sinv @ probes.u[i] for i in range(probes.M)]))


# ---------------------------------------------------------------------------
# surrogate objective
# ---------------------------------------------------------------------------


def test_q_tilde_white_noise_closed_form():
    # alpha = 0: Sigma = sigma2 I, so Q = -1/2 (n log s2 + ||W||^2 / s2)
    rng = np.random.default_rng(0)
    W = rng.standard_normal(GRID6.n)
    for s2 in (0.5, 1.0, 3.7):
        got = q_tilde(Theta(np.zeros(0), CovParams(s2, 0.0)), W, None, None, GRID6)
        want = -0.5 * (GRID6.n * np.log(s2) + W @ W / s2)
        np.testing.assert_allclose(got, want, rtol=1e-12)


@pytest.mark.parametrize("eta_t", PARAM_SETS)
def test_q_tilde_matches_dense(eta_t):
    W, X, c, probes = em_instance(eta_t, seed=1)
    beta = np.array([0.3, -0.5, 0.9])
    theta = Theta(beta, CovParams(0.8, 2.1))
    r = W - X @ beta
    tr_val = dense_trace_value(theta.eta, probes, GRID6)
    want = dense_q_tilde(theta.eta.sigma2, theta.eta.alpha, r, tr_val, GRID6)
    got = q_tilde(theta, W, X, probes, GRID6)
    np.testing.assert_allclose(got, want, rtol=1e-8)


def test_q_tilde_accepts_precomputed_spectrum():
    W, X, c, probes = em_instance(PARAM_SETS[0], seed=2)
    theta = Theta(np.array([0.1, 0.2, -0.3]), CovParams(1.1, 1.7))
    f = quasi_matern_spectrum(theta.eta, GRID6)
    assert q_tilde(theta, W, X, probes, GRID6) == q_tilde(theta, W, X, probes, GRID6, f=f)


def test_theta_vector_layout():
    v = Theta(np.array([1.0, 2.0]), CovParams(3.0, 4.0)).vector()
    np.testing.assert_array_equal(v, [1.0, 2.0, 3.0, 4.0])


# ---------------------------------------------------------------------------
# beta step
# ---------------------------------------------------------------------------


def test_update_beta_intercept_only_white_noise():
    rng = np.random.default_rng(3)
    W = rng.standard_normal(GRID6.n)
    f = quasi_matern_spectrum(CovParams(2.5, 0.0), GRID6)
    beta = update_beta(W, np.ones((GRID6.n, 1)), f)
    np.testing.assert_allclose(beta, [W.mean()], rtol=1e-12)


def test_update_beta_exact_fit_is_fixed_point():
    W, X, _, _ = em_instance(PARAM_SETS[0], seed=4)
    beta0 = np.array([1.0, -2.0, 0.5])
    f = quasi_matern_spectrum(PARAM_SETS[1], GRID6)
    np.testing.assert_allclose(update_beta(X @ beta0, X, f), beta0, atol=1e-10)


@pytest.mark.parametrize("eta_t", PARAM_SETS)
def test_update_beta_matches_dense_gls(eta_t):
    W, X, _, _ = em_instance(eta_t, seed=5)
    f = quasi_matern_spectrum(eta_t, GRID6)
    want = dense_gls(W, X, dense_sigma_inv(f))
    np.testing.assert_allclose(update_beta(W, X, f), want, rtol=1e-8)


def test_update_beta_torus_shift_invariant():
    # circulant Sigma commutes with torus translations, so shifting the
    # response and the design rows together must leave the GLS solution alone
    W, X, _, _ = em_instance(PARAM_SETS[0], seed=6)
    f = quasi_matern_spectrum(PARAM_SETS[0], GRID6)

    def shift(v):
        return flatten(np.roll(unflatten(v, 6, 6), (2, 3), axis=(0, 1)))

    Ws = shift(W)
    Xs = np.column_stack([shift(X[:, j]) for j in range(X.shape[1])])
    np.testing.assert_allclose(update_beta(Ws, Xs, f), update_beta(W, X, f), rtol=1e-10)


def test_update_beta_collinear_design_raises():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(GRID6.n)
    X = np.column_stack([np.ones(GRID6.n), x, 2.0 + 3.0 * x])
    f = quasi_matern_spectrum(PARAM_SETS[0], GRID6)
    with pytest.raises(CollinearityError) as exc:
        update_beta(rng.standard_normal(GRID6.n), X, f)
    assert "dependent" in str(exc.value)
    assert exc.value.columns and set(exc.value.columns) <= {0, 1, 2}


# ---------------------------------------------------------------------------
# eta step
# ---------------------------------------------------------------------------


def test_profiled_sigma2_white_noise_exact():
    rng = np.random.default_rng(8)
    r = rng.standard_normal(GRID6.n)
    np.testing.assert_allclose(profiled_sigma2(r, 0.0, None, GRID6), r @ r / GRID6.n,
                               rtol=1e-12)


def test_profiled_sigma2_counts_trace_term():
    # u = v at alpha = 0 makes the trace part exactly n, shifting the
    # profiled variance by exactly one
    rng = np.random.default_rng(9)
    r = rng.standard_normal(GRID6.n)
    v = rng.choice([-1.0, 1.0], size=(4, GRID6.n))
    probes = ProbePairs(v=v, u=v.copy(), solve_converged=np.ones(4, dtype=bool))
    got = profiled_sigma2(r, 0.0, probes, GRID6)
    np.testing.assert_allclose(got, r @ r / GRID6.n + 1.0, rtol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_profiled_sigma2_scales_quadratically(seed):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(GRID6.n)
    c = float(rng.uniform(0.2, 5.0))
    alpha = float(rng.uniform(0.0, 6.0))
    base = profiled_sigma2(r, alpha, None, GRID6)
    np.testing.assert_allclose(profiled_sigma2(c * r, alpha, None, GRID6), c * c * base,
                               rtol=1e-10)


def test_profiled_sigma2_is_stationary_point():
    W, X, c, probes = em_instance(PARAM_SETS[0], seed=10)
    alpha = 2.3
    s2 = profiled_sigma2(W, alpha, probes, GRID6)

    def q_at(s):
        return q_tilde(Theta(np.zeros(0), CovParams(s, alpha)), W, None, probes, GRID6)

    q_star = q_at(s2)
    assert q_at(s2 * (1 + 1e-4)) <= q_star
    assert q_at(s2 * (1 - 1e-4)) <= q_star


def test_update_eta_dominates_2d_grid_search():
    W, X, c, probes = em_instance(PARAM_SETS[0], seed=11, M=3)
    bounds = (1e-2, 6.0)
    eta_hat = update_eta(W, probes, GRID6, bounds)

    alphas = np.geomspace(bounds[0], bounds[1], 40)
    sigmas = np.geomspace(0.05, 100.0, 49)
    q_grid = np.empty((sigmas.size, alphas.size))
    for j, a in enumerate(alphas):
        Sinv1 = dense_sigma_inv(quasi_matern_spectrum(CovParams(1.0, a), GRID6))
        quad1 = W @ Sinv1 @ W
        tr1 = float(np.mean([probes.v[i] @ Sinv1 @ probes.u[i] for i in range(probes.M)]))
        _, logdet1 = np.linalg.slogdet(np.linalg.inv(Sinv1))
        for k, s in enumerate(sigmas):
            q_grid[k, j] = -0.5 * (GRID6.n * np.log(s) + logdet1 + (quad1 + tr1) / s)

    k_star, j_star = np.unravel_index(np.argmax(q_grid), q_grid.shape)
    assert 0 < k_star < sigmas.size - 1  # grid brackets the optimum
    q_hat = q_tilde(Theta(np.zeros(0), eta_hat), W, None, probes, GRID6)
    assert q_hat >= q_grid[k_star, j_star] - 1e-9 * (1 + abs(q_hat))
    log_step_a = np.log(alphas[1] / alphas[0])
    log_step_s = np.log(sigmas[1] / sigmas[0])
    assert abs(np.log(eta_hat.alpha / alphas[j_star])) <= log_step_a + 1e-12
    assert abs(np.log(eta_hat.sigma2 / sigmas[k_star])) <= log_step_s + 1e-12


def test_update_eta_never_loses_to_incumbent():
    W, X, c, probes = em_instance(PARAM_SETS[1], seed=12)
    incumbent = CovParams(0.37, 2.2)
    eta_hat = update_eta(W, probes, GRID6, (1e-2, 6.0), incumbent=incumbent)
    q_new = q_tilde(Theta(np.zeros(0), eta_hat), W, None, probes, GRID6)
    q_inc = q_tilde(Theta(np.zeros(0), incumbent), W, None, probes, GRID6)
    assert q_new >= q_inc - 1e-9 * (1 + abs(q_inc))


def test_update_eta_records_bound_hits():
    W, _, _, probes = em_instance(PARAM_SETS[0], seed=13)
    diagnostics = {}
    eta_hat = update_eta(W, probes, GRID6, (6.0, 6.01), diagnostics=diagnostics)
    assert 6.0 <= eta_hat.alpha <= 6.01
    assert diagnostics["alpha_bound_hits"] >= 1


@pytest.mark.parametrize("bounds", [(0.0, 5.0), (3.0, 2.0), (-1.0, 1.0)])
def test_update_eta_rejects_bad_bounds(bounds):
    W, _, _, probes = em_instance(PARAM_SETS[0], seed=14)
    with pytest.raises(ConfigError):
        update_eta(W, probes, GRID6, bounds)


# ---------------------------------------------------------------------------
# full fits
# ---------------------------------------------------------------------------


def small_dataset(seed=0, n1=8, beta=(0.2, 0.7)):
    grid = GridSpec.unit(n1, n1)
    eta = CovParams(amplitude_for_variance(0.5, 3.0, grid), 3.0)
    scen = SimScenario(grid, eta, np.asarray(beta), seed=seed)
    data = simulate_dataset(scen)
    return data.Y, data.X, grid


def test_fit_all_zero_counts_intensity_collapses():
    # no events anywhere: the likelihood has no maximizer, the intercept
    # drifts negative, and the fitted total intensity falls below one event
    grid = GridSpec.unit(8, 8)
    Y = CountGrid(np.zeros((8, 8)), grid)
    res = fit(Y, np.ones((64, 1)), grid, FitConfig(seed=0))
    assert res.diagnostics["warmstart_sigma2_floored"]
    assert res.em_iterations == 100 and not res.converged
    assert res.theta_star.beta[0] < -4.0
    assert float(np.exp(res.W_star).sum()) < 1.0


def test_fit_z_star_is_w_minus_xbeta():
    Y, X, grid = small_dataset(seed=1)
    res = fit(Y, X, grid, FitConfig(max_em=5, seed=0))
    np.testing.assert_allclose(res.Z_star, res.W_star - X @ res.theta_star.beta,
                               atol=1e-12)


def test_fit_is_deterministic():
    Y, X, grid = small_dataset(seed=2)
    r1 = fit(Y, X, grid, FitConfig(max_em=6, seed=5))
    r2 = fit(Y, X, grid, FitConfig(max_em=6, seed=5))
    np.testing.assert_array_equal(r1.theta_star.vector(), r2.theta_star.vector())
    np.testing.assert_array_equal(r1.W_star, r2.W_star)
    np.testing.assert_array_equal(r1.objective_trace, r2.objective_trace)


def test_fit_objective_trace_is_monotone_within_iterations():
    Y, X, grid = small_dataset(seed=3)
    res = fit(Y, X, grid, FitConfig(max_em=12, seed=0))
    q_inc, q_new = res.objective_trace[:, 0], res.objective_trace[:, 1]
    assert res.objective_trace.shape[0] >= 1
    assert np.all(q_new >= q_inc - 1e-9 * (1 + np.abs(q_inc)))


def test_fit_converged_flag_with_loose_tolerance():
    Y, X, grid = small_dataset(seed=4)
    res = fit(Y, X, grid, FitConfig(eps_em=1e6, seed=0))
    assert res.converged and res.em_iterations == 1


def test_fit_covariance_only_ignores_scheme():
    Y, _, grid = small_dataset(seed=5, beta=())
    ra = fit(Y, None, grid, FitConfig(max_em=6, scheme="joint", seed=0))
    rb = fit(Y, None, grid, FitConfig(max_em=6, scheme="fixed", seed=0))
    assert ra.theta_star.beta.size == 0
    np.testing.assert_array_equal(ra.theta_star.vector(), rb.theta_star.vector())
    np.testing.assert_array_equal(ra.W_star, rb.W_star)


def test_fixed_scheme_freezes_beta_after_first_iteration():
    Y, X, grid = small_dataset(seed=6)
    eta0 = CovParams(1.0, 2.0)
    out = []
    for max_em in (1, 6):
        cfg = FitConfig(max_em=max_em, scheme="fixed", seed=0)
        beta, *_ = _em_stage(Y, X, grid, cfg, eta0, None, "fixed", (1e-2, 8.0), {})
        out.append(beta)
    np.testing.assert_array_equal(out[0], out[1])


def test_fit_recovers_strong_slope():
    grid = GridSpec.unit(16, 16)
    eta = CovParams(amplitude_for_variance(0.5, 4.0, grid), 4.0)
    scen = SimScenario(grid, eta, np.array([0.5, 0.8]), seed=3)
    data = simulate_dataset(scen)
    res = fit(data.Y, data.X, grid, FitConfig(eps_em=1e-4, max_em=40, seed=0))
    assert abs(res.theta_star.beta[1] - 0.8) < 0.15


def test_fit_rejects_wrong_design_shape():
    Y, X, grid = small_dataset(seed=7)
    with pytest.raises(ConfigError):
        fit(Y, np.ones((5, 2)), grid, FitConfig())


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kwargs", [
    {"scheme": "both"},
    {"M": 0},
    {"eps_em": 0.0},
    {"eps_newton": -1.0},
    {"max_em": 0},
    {"max_newton": 0},
    {"alpha_bounds": (3.0, 2.0)},
    {"alpha_bounds": (0.0, 1.0)},
])
def test_fit_config_validation(kwargs):
    with pytest.raises(ConfigError):
        FitConfig(**kwargs)


def test_fit_config_json_round_trip():
    cfg = FitConfig(M=3, scheme="fixed", eps_em=1e-4, alpha_bounds=(0.5, 7.0), seed=11)
    doc = json.loads(json.dumps(cfg.to_dict()))
    assert FitConfig.from_dict(doc) == cfg
    plain = FitConfig()
    assert FitConfig.from_dict(json.loads(json.dumps(plain.to_dict()))) == plain


def test_fit_config_rejects_unknown_keys():
    with pytest.raises(ConfigError) as exc:
        FitConfig.from_dict({"M": 2, "niter": 50})
    assert "niter" in str(exc.value)
