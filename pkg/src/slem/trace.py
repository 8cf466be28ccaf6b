"""Hutchinson estimation of the E-step trace term.

The expensive half of each probe, u_i = (Sigma_t^{-1} + C)^{-1} v_i, is
solved once per EM iteration; trace_term then prices any candidate spectrum
against the same pairs with one cheap matvec each, which is what makes the
1-D range search affordable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .laplace import precision_operator
from .pcg import pcg_solve
from .spectral import SpectralField, sigma_inv_matvec


@dataclass(frozen=True)
class ProbePairs:
    v: np.ndarray  # (M, n) Rademacher probes
    u: np.ndarray  # (M, n) solves against the fixed posterior precision
    solve_converged: np.ndarray  # (M,) bool

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if v.ndim != 2 or u.shape != v.shape:
            raise ConfigError(f"probe arrays must share an (M, n) shape, got {v.shape} and {u.shape}")
        if not np.all(np.abs(v) == 1.0):
            raise ConfigError("probe entries must be Rademacher (+1 or -1)")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "u", u)

    @property
    def M(self):
        return self.v.shape[0]


def make_probes(M: int, n: int, seed: int, f_t: SpectralField, c_diag,
                eps_pcg: float = 1e-3) -> ProbePairs:
    """Draw M Rademacher probes and solve (Sigma_t^{-1} + C) u = v for each."""
    if M < 1:
        raise ConfigError(f"probe count M must be >= 1, got {M}")
    if n != f_t.n:
        raise ConfigError(f"probe length {n} does not match spectrum size {f_t.n}")
    rng = np.random.default_rng(seed)
    v = 2.0 * rng.integers(0, 2, size=(M, n)).astype(float) - 1.0
    op = precision_operator(f_t, np.asarray(c_diag, dtype=float))
    u = np.empty_like(v)
    ok = np.empty(M, dtype=bool)
    for i in range(M):
        sol = pcg_solve(op, v[i], epsilon=eps_pcg)
        u[i] = sol.x
        ok[i] = sol.converged
    return ProbePairs(v, u, ok)


def trace_term(f_candidate: SpectralField, probes: ProbePairs) -> float:
    """(1/M) sum_i v_i' Sigma_eta^{-1} u_i, the stochastic trace of
    Sigma_eta^{-1} (Sigma_t^{-1} + C)^{-1} at the candidate eta."""
    total = 0.0
    for i in range(probes.M):
        total += float(probes.v[i] @ sigma_inv_matvec(f_candidate, probes.u[i]))
    return total / probes.M
