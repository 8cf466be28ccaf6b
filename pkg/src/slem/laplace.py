"""Gaussian (Laplace) approximation of the latent-field posterior.

The working variable is W = X beta + Z, so the prior mean is X beta and the
conditional posterior of W given the data is approximated at its mode by
N(W*, (Sigma^{-1} + C)^{-1}) with C = diag(Delta exp(W*)).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .grid import CountGrid
from .pcg import SpdOperator, pcg_solve
from .spectral import SpectralField, inverse_base_row, sigma_inv_matvec

EXP_CLAMP = 50.0  # exp argument cap; anything above is already astronomical


def clamped_exp(w):
    return np.exp(np.minimum(w, EXP_CLAMP))


@dataclass
class LaplaceFit:
    mode: np.ndarray           # W*, n-vector
    c_diag: np.ndarray         # Delta exp(W*), strictly positive
    newton_iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)


def precision_operator(f: SpectralField, c_diag: np.ndarray) -> SpdOperator:
    """Matrix-free Sigma^{-1} + diag(c); the diagonal of Sigma^{-1} is its
    lag-zero entry, constant across pixels."""
    inv0 = inverse_base_row(f)[0]
    return SpdOperator(
        apply=lambda v: sigma_inv_matvec(f, v) + c_diag * v,
        diag=inv0 + c_diag,
    )


def posterior_score(W, Y: CountGrid, delta, Xbeta, f: SpectralField, diagnostics=None):
    """Gradient of the W-posterior: Y - Delta exp(W) - Sigma^{-1}(W - X beta)."""
    W = np.asarray(W, dtype=float)
    clamped = int(np.sum(W > EXP_CLAMP))
    if diagnostics is not None and clamped:
        diagnostics["clamp_events"] = diagnostics.get("clamp_events", 0) + clamped
    return Y.vector() - delta * clamped_exp(W) - sigma_inv_matvec(f, W - Xbeta)


def log_posterior(W, y_vec, delta, Xbeta, f: SpectralField) -> float:
    """log p(W | Y, theta) up to an additive constant."""
    q = W - Xbeta
    return float(np.sum(y_vec * W - delta * clamped_exp(W)) - 0.5 * (q @ sigma_inv_matvec(f, q)))


def newton_mode(Y: CountGrid, delta, Xbeta, f: SpectralField, W_init=None,
                epsilon: float = 1e-3, max_newton: int = 50, eps_pcg: float = 1e-3,
                diagnostics=None) -> LaplaceFit:
    """Newton iteration for the posterior mode of W.

    Each step solves (Sigma^{-1} + C) step = score by PCG; a full step that
    decreases the log posterior is halved up to 10 times.  Stops when
    n^{-1/2} ||W_{l+1} - W_l|| < epsilon.
    """
    y_vec = Y.vector()
    delta = np.asarray(delta, dtype=float)
    Xbeta = np.asarray(Xbeta, dtype=float)
    n = y_vec.size
    W = Xbeta.copy() if W_init is None else np.asarray(W_init, dtype=float).copy()
    diag = diagnostics if diagnostics is not None else {}

    inv0 = inverse_base_row(f)[0]
    obj = log_posterior(W, y_vec, delta, Xbeta, f)
    if not np.isfinite(obj):
        raise NumericalError("log posterior not finite at the Newton starting value")

    converged = False
    iterations = 0
    for _ in range(max_newton):
        iterations += 1
        score = posterior_score(W, Y, delta, Xbeta, f, diagnostics=diag)
        c = delta * clamped_exp(W)
        op = SpdOperator(apply=lambda v, c=c: sigma_inv_matvec(f, v) + c * v, diag=inv0 + c)
        sol = pcg_solve(op, score, epsilon=eps_pcg)
        if not sol.converged:
            diag["pcg_nonconverged"] = diag.get("pcg_nonconverged", 0) + 1

        step = sol.x
        t = 1.0
        accepted = False
        slack = 1e-12 * (1.0 + abs(obj))  # fp headroom so tiny steps near the mode still land
        for _ in range(10):
            W_new = W + t * step
            obj_new = log_posterior(W_new, y_vec, delta, Xbeta, f)
            if np.isfinite(obj_new) and obj_new >= obj - slack:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            diag["newton_stalled"] = diag.get("newton_stalled", 0) + 1
            break  # cannot improve; keep current W, report non-convergence

        diff_rms = np.linalg.norm(W_new - W) / np.sqrt(n)
        W, obj = W_new, obj_new
        if diff_rms < epsilon:
            converged = True
            break

    return LaplaceFit(W, delta * clamped_exp(W), iterations, converged, diag)
