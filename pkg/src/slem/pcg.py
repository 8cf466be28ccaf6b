"""Jacobi-preconditioned conjugate gradients with a residual-change stop.

The stopping rule is sqrt(mean((r_{k+1} - r_k)^2)) <= epsilon, checked from
the first full iteration onward; an exact-solution guard (||r|| <= 1e-12
||b||) catches systems solved in fewer steps than the change rule can see.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class SpdOperator:
    """Matrix-free SPD operator: apply(v) = Av, diag = diagonal of A."""

    apply: Callable[[np.ndarray], np.ndarray]
    diag: np.ndarray


@dataclass
class PcgResult:
    x: np.ndarray
    iterations: int
    converged: bool
    resid_norms: list = field(default_factory=list)  # preconditioned norms sqrt(r M^-1 r)


def default_max_iter(n: int) -> int:
    return min(2000, max(1, math.ceil(10.0 * math.sqrt(n))))


def pcg_solve(op: SpdOperator, b: np.ndarray, x0=None, epsilon: float = 1e-3,
              max_iter: int | None = None) -> PcgResult:
    b = np.asarray(b, dtype=float)
    n = b.size
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if max_iter is not None and max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    diag = np.asarray(op.diag, dtype=float)
    if diag.size != n:
        raise ConfigError(f"operator diagonal length {diag.size} != rhs length {n}")
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericalError("operator diagonal must be strictly positive")
    if max_iter is None:
        max_iter = default_max_iter(n)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    bnorm = np.linalg.norm(b)
    r = b - op.apply(x)
    if np.linalg.norm(r) <= 1e-12 * bnorm or bnorm == 0.0:
        return PcgResult(x, 0, True)

    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    result = PcgResult(x, 0, False, [math.sqrt(rz)])
    best_rnorm = np.linalg.norm(r)
    best_x = x.copy()
    sqrt_n = math.sqrt(n)

    for k in range(1, max_iter + 1):
        Ap = op.apply(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise NumericalError(f"PCG curvature p'Ap = {pAp} at iteration {k}; operator not SPD")
        alpha = rz / pAp
        x = x + alpha * p
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"PCG iterate contains non-finite values at iteration {k}")
        change_rms = abs(alpha) * np.linalg.norm(Ap) / sqrt_n  # = ||r_{k+1} - r_k|| / sqrt(n)
        r = r - alpha * Ap
        z = r / diag
        rz_new = float(r @ z)
        result.resid_norms.append(math.sqrt(max(rz_new, 0.0)))
        rnorm = np.linalg.norm(r)
        if rnorm < best_rnorm:
            best_rnorm = rnorm
            best_x = x.copy()
        result.iterations = k
        if rnorm <= 1e-12 * bnorm or change_rms <= epsilon:
            result.x = x
            result.converged = True
            return result
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    result.x = best_x  # best residual seen; caller decides how to treat non-convergence
    return result
