"""Circulant (wrap-around) covariance on the grid, driven by its spectrum.

The covariance never exists as a matrix: it is diagonalized by the 2-D DFT,
so every operation is elementwise in frequency space.  Convention used
throughout: forward DFT unscaled, inverse DFT carries the 1/n factor (numpy's
default), hence

    Sigma = F^{-1} diag(f) F,          eigenvalues exactly f(omega),
    Cov(h) = (1/n) sum_omega f(omega) e^{i omega . h},
    log|Sigma| = sum_omega log f(omega).

Matvecs run through real transforms, so results are exactly real; the
symmetry of f under frequency negation (which makes that legitimate) is a
hard construction-time invariant of SpectralField.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, NumericalError
from .grid import GridSpec, flatten, unflatten

DENSE_LIMIT = 4096  # dense_covariance is a test oracle, not a production path


@dataclass(frozen=True)
class CovParams:
    """Marginal variance sigma2 and inverse-range alpha, in pixel units."""

    sigma2: float
    alpha: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")


@dataclass(frozen=True)
class SpectralField:
    """Covariance eigenvalues f(omega) on the n1 x n2 Fourier frequency grid."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ConfigError(f"spectral field must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise NumericalError("spectral field entries must be finite and strictly positive")
        # f(omega) = f(-omega mod 2 pi): the real-matvec path silently assumes it
        mirrored = np.roll(vals[::-1, ::-1], (1, 1), axis=(0, 1))
        if not np.allclose(vals, mirrored, rtol=1e-8, atol=0.0):
            raise NumericalError("spectral field is not symmetric under frequency negation")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n(self):
        return self.values.size


def quasi_matern_shape(alpha: float, grid: GridSpec) -> np.ndarray:
    """Unit-variance spectrum shape (1 + alpha^2 sin^2(w1/2) + alpha^2 sin^2(w2/2))^-2."""
    s1 = np.sin(np.pi * np.arange(grid.n1) / grid.n1) ** 2
    s2 = np.sin(np.pi * np.arange(grid.n2) / grid.n2) ** 2
    return (1.0 + alpha**2 * (s1[:, None] + s2[None, :])) ** -2.0


def quasi_matern_spectrum(eta: CovParams, grid: GridSpec) -> SpectralField:
    """Spectral density sigma2 (1 + alpha^2 sin^2(w1/2) + alpha^2 sin^2(w2/2))^-2."""
    return SpectralField(eta.sigma2 * quasi_matern_shape(eta.alpha, grid))


def marginal_variance(eta: CovParams, grid: GridSpec) -> float:
    """Cov(0) = sigma2 . mean(shape).

    sigma2 is a spectral amplitude, not the pixel variance; for large alpha the
    shape mean is O(alpha^-2) and the two differ by orders of magnitude.
    """
    return eta.sigma2 * float(np.mean(quasi_matern_shape(eta.alpha, grid)))


def amplitude_for_variance(variance: float, alpha: float, grid: GridSpec) -> float:
    """Spectral sigma2 giving the requested pixel variance at this alpha."""
    if variance <= 0:
        raise ConfigError(f"variance must be positive, got {variance}")
    return variance / float(np.mean(quasi_matern_shape(alpha, grid)))


# ---------------------------------------------------------------------------
# matvecs and friends (all O(n log n), all exact-real by construction)
# ---------------------------------------------------------------------------


def _apply_spectrum(fvals: np.ndarray, v: np.ndarray) -> np.ndarray:
    n1, n2 = fvals.shape
    v = np.asarray(v, dtype=float)
    if v.size != n1 * n2:
        raise ConfigError(f"vector length {v.size} does not match grid {n1}x{n2}")
    if not np.all(np.isfinite(v)):
        raise NumericalError("matvec input contains non-finite entries")
    field = unflatten(v, n1, n2)
    out = np.fft.irfft2(np.fft.rfft2(field) * fvals[:, : n2 // 2 + 1], s=(n1, n2))
    return flatten(out)


def sigma_matvec(f: SpectralField, v: np.ndarray) -> np.ndarray:
    """Sigma v = iDFT(f . DFT(v))."""
    return _apply_spectrum(f.values, v)


def sigma_inv_matvec(f: SpectralField, v: np.ndarray) -> np.ndarray:
    """Sigma^{-1} v = iDFT(f^{-1} . DFT(v)); exact inverse, not an iterative solve."""
    return _apply_spectrum(1.0 / f.values, v)


def log_det(f: SpectralField) -> float:
    return float(np.sum(np.log(f.values)))


def sample_gp(f: SpectralField, seed: int) -> np.ndarray:
    """One exact N(0, Sigma) draw: Z = iDFT(sqrt(f) . DFT(eps)), eps iid N(0,1).

    The FFT square root has the same even symmetry as f, so the transform is a
    real symmetric matrix square root of Sigma and the draw is exact, not an
    approximation.
    """
    n1, n2 = f.shape
    eps = np.random.default_rng(seed).standard_normal((n1, n2))
    out = np.fft.irfft2(np.fft.rfft2(eps) * np.sqrt(f.values[:, : n2 // 2 + 1]), s=(n1, n2))
    return flatten(out)


def base_row(f: SpectralField) -> np.ndarray:
    """First row of Sigma, i.e. Cov(h) = (1/n) sum_omega f e^{i omega . h}, flattened."""
    n1, n2 = f.shape
    return flatten(np.fft.irfft2(f.values[:, : n2 // 2 + 1], s=(n1, n2)))


def inverse_base_row(f: SpectralField) -> np.ndarray:
    """First row of Sigma^{-1}: same transform applied to 1/f."""
    n1, n2 = f.shape
    return flatten(np.fft.irfft2((1.0 / f.values)[:, : n2 // 2 + 1], s=(n1, n2)))


def dense_covariance(f: SpectralField) -> np.ndarray:
    """Dense Sigma assembled from the spectral sum; test oracle only.

    Deliberately avoids the FFT so it is an independent route: the lag table
    comes from explicit complex-exponential matrix products.
    """
    n1, n2 = f.shape
    n = n1 * n2
    if n > DENSE_LIMIT:
        raise ConfigError(f"dense covariance limited to n <= {DENSE_LIMIT}, got n = {n}")
    e1 = np.exp(2j * np.pi * np.outer(np.arange(n1), np.arange(n1)) / n1)
    e2 = np.exp(2j * np.pi * np.outer(np.arange(n2), np.arange(n2)) / n2)
    lags = (e1 @ f.values @ e2.T).real / n  # lags[h1, h2] = Cov((h1, h2))
    idx = np.arange(n)
    i1, i2 = idx % n1, idx // n1
    return lags[(i1[:, None] - i1[None, :]) % n1, (i2[:, None] - i2[None, :]) % n2]


# ---------------------------------------------------------------------------
# range calibration against the Matern family
# ---------------------------------------------------------------------------


def matern_correlation(h, range_, nu=1.0):
    """2^(1-nu)/Gamma(nu) (h/a)^nu K_nu(h/a), with rho(0) = 1."""
    h = np.asarray(h, dtype=float)
    t = h / range_
    out = np.ones_like(t)
    pos = t > 0
    out[pos] = (2.0 ** (1.0 - nu) / special.gamma(nu)) * t[pos] ** nu * special.kv(nu, t[pos])
    return out if out.ndim else float(out)


def correlation_at_lag(alpha: float, grid: GridSpec, lag: int) -> float:
    """Quasi-Matern correlation at lag (lag, 0) pixels, wrap-around included."""
    shape = quasi_matern_shape(alpha, grid)
    w1 = 2.0 * np.pi * np.arange(grid.n1) / grid.n1
    num = float(np.sum(shape * np.cos(w1 * lag)[:, None]))
    return num / float(np.sum(shape))


def calibrate_range_to_matern(grid: GridSpec, matern_range: float, nu: float = 1.0) -> float:
    """Quasi-Matern alpha whose correlation at lag round(matern_range) matches
    the Matern correlation there.

    Bisection on a bracket found by scanning; correlation is monotone in alpha
    over the scanned window.
    """
    lag = int(round(matern_range))
    target = float(matern_correlation(np.array([float(lag)]), matern_range, nu)[0])

    def gap(a):
        return correlation_at_lag(a, grid, lag) - target

    lo, hi = 1e-2, float(max(grid.n1, grid.n2))
    if gap(lo) > 0:
        raise NumericalError("calibration target below the white-noise correlation")
    while gap(hi) < 0:
        hi *= 2.0
        if hi > 1e4:
            raise NumericalError("calibration failed to bracket the Matern target")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10 * hi:
            break
    return 0.5 * (lo + hi)
