"""Monte Carlo EM for the gridded Cox model.

E-step: Laplace mode of W at the current theta, plus Hutchinson probe pairs
for the trace correction.  M-step: generalized least squares for beta, then a
profiled 1-D search over the range for eta.  The surrogate objective is

    Q(theta | theta_t; M) = -1/2 [ log|Sigma_eta|
                                   + (W_t - X beta)' Sigma_eta^{-1} (W_t - X beta)
                                   + (1/M) sum_i v_i' Sigma_eta^{-1} u_i ].

Both M-step updates are guarded by an explicit keep-the-better comparison
against the incumbent, so the recorded objective trace is monotone by
construction, not just in exact arithmetic.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import linalg as sla

from .errors import CollinearityError, ConfigError
from .grid import CountGrid, GridSpec
from .laplace import newton_mode
from .spectral import (CovParams, SpectralField, log_det, quasi_matern_shape,
                       quasi_matern_spectrum, sigma_inv_matvec)
from .trace import ProbePairs, make_probes, trace_term

SIGMA2_FLOOR = 1e-8  # keeps the profiled variance strictly positive


@dataclass(frozen=True)
class Theta:
    beta: np.ndarray  # (p+1,) regression coefficients; may be empty
    eta: CovParams

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))

    def vector(self):
        return np.concatenate([self.beta, [self.eta.sigma2, self.eta.alpha]])


@dataclass
class FitConfig:
    """Tuning knobs; field names double as the JSON schema for configs."""

    M: int = 1
    scheme: str = "joint"
    eps_em: float = 1e-5
    eps_newton: float = 1e-3
    eps_pcg: float = 1e-3
    max_em: int = 100
    max_newton: int = 50
    alpha_bounds: tuple | None = None  # None -> (1e-2, n1) at fit time
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in ("joint", "fixed"):
            raise ConfigError(f"scheme must be 'joint' or 'fixed', got {self.scheme!r}")
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        for name in ("eps_em", "eps_newton", "eps_pcg"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_em < 1 or self.max_newton < 1:
            raise ConfigError("max_em and max_newton must be >= 1")
        if self.alpha_bounds is not None:
            lo, hi = self.alpha_bounds
            if not (0 < lo < hi):
                raise ConfigError(f"alpha_bounds must satisfy 0 < lo < hi, got {self.alpha_bounds}")
            object.__setattr__(self, "alpha_bounds", (float(lo), float(hi)))

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if d["alpha_bounds"] is not None:
            d["alpha_bounds"] = list(d["alpha_bounds"])
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown fit config keys: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get("alpha_bounds") is not None:
            ab = doc["alpha_bounds"]
            if not (isinstance(ab, (list, tuple)) and len(ab) == 2):
                raise ConfigError(f"alpha_bounds must be a 2-element list, got {ab!r}")
            doc["alpha_bounds"] = tuple(float(v) for v in ab)
        return cls(**doc)


@dataclass
class FitResult:
    theta_star: Theta
    W_star: np.ndarray
    Z_star: np.ndarray
    em_iterations: int
    converged: bool
    objective_trace: np.ndarray  # (iters, 2): Q at incumbent, Q after M-step
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# surrogate objective and M-step updates
# ---------------------------------------------------------------------------


def q_tilde(theta: Theta, W_mode, X, probes: ProbePairs | None, grid: GridSpec,
            f: SpectralField | None = None) -> float:
    """Q(theta | theta_t; M) for the probe pairs built at theta_t."""
    if f is None:
        f = quasi_matern_spectrum(theta.eta, grid)
    r = W_mode - X @ theta.beta if X is not None and theta.beta.size else np.asarray(W_mode, float)
    quad = float(r @ sigma_inv_matvec(f, r))
    tr = trace_term(f, probes) if probes is not None else 0.0
    return -0.5 * (log_det(f) + quad + tr)


def update_beta(W_mode, X, f_t: SpectralField) -> np.ndarray:
    """GLS solve of (X' Sigma^{-1} X) beta = X' Sigma^{-1} W."""
    X = np.asarray(X, dtype=float)
    S = np.column_stack([sigma_inv_matvec(f_t, X[:, j]) for j in range(X.shape[1])])
    A = X.T @ S
    A = 0.5 * (A + A.T)
    b = S.T @ W_mode
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e12:
        raise CollinearityError(
            f"GLS normal matrix is singular; dependent columns: {_dependent_columns(X)}",
            columns=_dependent_columns(X),
        )
    return np.linalg.solve(A, b)


def _dependent_columns(X):
    # pivoted QR: columns whose R diagonal collapses are the dependent ones
    _, R, piv = sla.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    bad = d <= d[0] * 1e-10 if d.size and d[0] > 0 else np.ones_like(d, dtype=bool)
    return tuple(sorted(int(piv[i]) for i in np.nonzero(bad)[0]))


def profiled_sigma2(r, alpha: float, probes: ProbePairs | None, grid: GridSpec) -> float:
    """sigma2 maximizing Q at fixed alpha: (r' G_a^{-1} r + trace part) / n."""
    g = SpectralField(quasi_matern_shape(alpha, grid))
    quad = float(r @ sigma_inv_matvec(g, r))
    tr = trace_term(g, probes) if probes is not None else 0.0
    return max((quad + tr) / grid.n, SIGMA2_FLOOR)


def _profile_objective(r, alpha: float, probes, grid: GridSpec):
    # Q at (profiled sigma2, alpha); equals q_tilde there, constants included
    g_shape = quasi_matern_shape(alpha, grid)
    g = SpectralField(g_shape)
    quad = float(r @ sigma_inv_matvec(g, r))
    tr = trace_term(g, probes) if probes is not None else 0.0
    s2 = max((quad + tr) / grid.n, SIGMA2_FLOOR)
    obj = -0.5 * (grid.n * np.log(s2) + float(np.sum(np.log(g_shape))) + (quad + tr) / s2)
    return obj, s2


def update_eta(r, probes: ProbePairs | None, grid: GridSpec, bounds,
               incumbent: CovParams | None = None, diagnostics=None) -> CovParams:
    """Profiled 1-D maximization over alpha: coarse log-grid scan, then
    golden-section to 1e-4 relative width, then a keep-the-better comparison
    with the incumbent range so the step never loses ground."""
    lo, hi = float(bounds[0]), float(bounds[1])
    if not 0 < lo < hi:
        raise ConfigError(f"alpha bounds must satisfy 0 < lo < hi, got {bounds}")
    r = np.asarray(r, dtype=float)

    cache = {}

    def phi(a):
        if a not in cache:
            cache[a] = _profile_objective(r, a, probes, grid)
        return cache[a][0]

    coarse = np.geomspace(lo, hi, 25)
    best = int(np.argmax([phi(a) for a in coarse]))
    a = coarse[max(best - 1, 0)]
    b = coarse[min(best + 1, coarse.size - 1)]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = phi(c), phi(d)
    while (b - a) > 1e-4 * 0.5 * (a + b):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = phi(d)
    alpha_hat = c if fc >= fd else d
    candidates = [alpha_hat]
    if incumbent is not None and lo <= incumbent.alpha <= hi:
        candidates.append(incumbent.alpha)
    alpha_hat = max(candidates, key=phi)
    obj, s2 = cache[alpha_hat]

    if diagnostics is not None and (alpha_hat / lo < 1.001 or hi / alpha_hat < 1.001):
        diagnostics["alpha_bound_hits"] = diagnostics.get("alpha_bound_hits", 0) + 1
    if diagnostics is not None and s2 == SIGMA2_FLOOR:
        diagnostics["sigma2_floor_hits"] = diagnostics.get("sigma2_floor_hits", 0) + 1
    return CovParams(s2, alpha_hat)


# ---------------------------------------------------------------------------
# EM driver
# ---------------------------------------------------------------------------


def _em_stage(Y: CountGrid, X, grid: GridSpec, config: FitConfig, eta0: CovParams,
              W0, scheme: str, bounds, diagnostics: dict):
    """One EM run; X may be None (covariance-only model).  Returns the state
    at the last iteration plus the per-iteration objective pairs."""
    n = grid.n
    delta = grid.delta()
    p1 = X.shape[1] if X is not None else 0
    beta = np.zeros(p1)
    eta = eta0
    f = quasi_matern_spectrum(eta, grid)
    W = np.zeros(n) if W0 is None else np.asarray(W0, dtype=float).copy()
    trace_rows = []
    converged = False
    iterations = 0

    for t in range(config.max_em):
        iterations = t + 1
        Xbeta = X @ beta if X is not None else np.zeros(n)
        lap = newton_mode(Y, delta, Xbeta, f, W_init=W, epsilon=config.eps_newton,
                          max_newton=config.max_newton, eps_pcg=config.eps_pcg,
                          diagnostics=diagnostics)
        W = lap.mode
        if not lap.converged:
            diagnostics["newton_nonconverged"] = diagnostics.get("newton_nonconverged", 0) + 1
        probes = make_probes(config.M, n, config.seed + t, f, lap.c_diag, config.eps_pcg)
        if not probes.solve_converged.all():
            diagnostics["probe_nonconverged"] = diagnostics.get("probe_nonconverged", 0) + 1

        theta_t = Theta(beta, eta)
        q_inc = q_tilde(theta_t, W, X, probes, grid, f=f)

        # beta step (GLS); joint updates every iteration, fixed only at t = 0
        if X is not None and (scheme == "joint" or t == 0):
            beta_cand = update_beta(W, X, f)
            if scheme == "joint":
                q_cand = q_tilde(Theta(beta_cand, eta), W, X, probes, grid, f=f)
                beta_new, q_mid = (beta_cand, q_cand) if q_cand >= q_inc else (beta, q_inc)
            else:
                beta_new = beta_cand  # the fixed scheme freezes this whatever Q says
                q_mid = q_tilde(Theta(beta_new, eta), W, X, probes, grid, f=f)
        else:
            beta_new, q_mid = beta, q_inc

        # eta step on the residual at the chosen beta
        r = W - X @ beta_new if X is not None else W
        eta_cand = update_eta(r, probes, grid, bounds, incumbent=eta, diagnostics=diagnostics)
        f_cand = quasi_matern_spectrum(eta_cand, grid)
        q_new = q_tilde(Theta(beta_new, eta_cand), W, X, probes, grid, f=f_cand)
        if q_new >= q_mid:
            eta_new, f_new = eta_cand, f_cand
        else:
            eta_new, f_new, q_new = eta, f, q_mid

        assert q_new >= q_inc - 1e-9 * (1.0 + abs(q_inc))  # monotone M-step
        trace_rows.append((q_inc, q_new))

        d = Theta(beta_new, eta_new).vector() - theta_t.vector()
        theta_rms = float(np.sqrt(np.mean(d * d)))
        beta, eta, f = beta_new, eta_new, f_new
        if theta_rms < config.eps_em:
            converged = True
            break

    return beta, eta, f, W, iterations, converged, trace_rows


def fit(Y: CountGrid, X, grid: GridSpec, config: FitConfig) -> FitResult:
    """Two-stage fit: a predictor-free warm start for the covariance, then the
    full model from beta = 0 at the warmed-up eta.

    X is an n x (p+1) design with intercept first, or None for a
    covariance-only model (then the warm start *is* the fit).
    """
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != grid.n:
            raise ConfigError(f"design matrix must be ({grid.n}, p+1), got {X.shape}")
        if X.shape[1] == 0:
            X = None
    y = Y.vector()
    bounds = config.alpha_bounds if config.alpha_bounds is not None else (1e-2, float(grid.n1))
    diagnostics = {}
    t0 = time.perf_counter()

    # stage 1: covariance-only warm start, W plays the role of Z
    ybar = float(np.mean(y))
    if ybar > 0:
        eta0 = CovParams(ybar, grid.n1 / 4.0)
    else:
        # no events anywhere: mean-count init is degenerate, fall back to a
        # unit prior variance so the intensity can still drift toward zero
        eta0 = CovParams(1.0, grid.n1 / 4.0)
        diagnostics["warmstart_sigma2_floored"] = True
    _, eta_warm, _, W_warm, it1, conv1, rows1 = _em_stage(
        Y, None, grid, config, eta0, None, config.scheme, bounds, diagnostics)
    diagnostics["stage1_iterations"] = it1
    diagnostics["stage1_converged"] = conv1
    diagnostics["stage1_eta"] = [eta_warm.sigma2, eta_warm.alpha]

    if X is None:
        beta, eta, it2, conv2, rows2 = np.zeros(0), eta_warm, it1, conv1, rows1
        W_last = W_warm
    else:
        beta, eta, _, W_last, it2, conv2, rows2 = _em_stage(
            Y, X, grid, config, eta_warm, W_warm, config.scheme, bounds, diagnostics)

    # refresh the mode at the final theta so W* matches theta*
    f_star = quasi_matern_spectrum(eta, grid)
    Xbeta = X @ beta if X is not None else np.zeros(grid.n)
    lap = newton_mode(Y, grid.delta(), Xbeta, f_star, W_init=W_last,
                      epsilon=config.eps_newton, max_newton=config.max_newton,
                      eps_pcg=config.eps_pcg, diagnostics=diagnostics)
    W_star = lap.mode
    Z_star = W_star - Xbeta
    diagnostics["runtime_seconds"] = time.perf_counter() - t0

    return FitResult(
        theta_star=Theta(beta, eta),
        W_star=W_star,
        Z_star=Z_star,
        em_iterations=it2,
        converged=conv2,
        objective_trace=np.asarray(rows2, dtype=float).reshape(-1, 2),
        diagnostics=diagnostics,
    )
