"""Variational refined channel estimation on the per-symbol system.

Two flavors:

* ``vmp_estimate`` solves the full stacked space-frequency posterior: the
  Gaussian fixed point Sigma = S^H S + Sigma_S + sigma_w2 * Sigma_p^{-1},
  h = Sigma^{-1} S^H y, with the spatial-frequency Kronecker prior. Time
  correlation is never consulted, which is exactly what makes the method
  robust to mismatched Doppler statistics.
* ``vmp_l_estimate`` decouples the variable nodes per (rx, tx) pair and
  sweeps them sequentially, re-subtracting the latest means of the other
  antennas before each update; only the frequency correlation enters.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, DimensionCapError

logger = logging.getLogger(__name__)

DEFAULT_DIM_CAP = 2048

__all__ = ["soft_transmit_stats", "floored_inverse", "kron_prior_inverse",
           "vmp_estimate", "vmp_l_estimate", "DEFAULT_DIM_CAP"]


def soft_transmit_stats(pilots: np.ndarray, soft_means, soft_vars, rho: float):
    """Expected transmitted symbols and their variances per antenna and RE.

    With no decoder feedback pass soft_means=None: the data term is then
    zero-mean with unit symbol variance.
    """
    pilots = np.asarray(pilots)
    if soft_means is None:
        d_hat = np.zeros_like(pilots)
        v = np.ones(pilots.shape, dtype=np.float64)
    else:
        d_hat = np.asarray(soft_means)
        v = np.asarray(soft_vars, dtype=np.float64)
        if d_hat.shape != pilots.shape or v.shape != pilots.shape:
            raise ConfigurationError("soft statistics must match the pilot shape")
    s_mean = np.sqrt(rho) * pilots + np.sqrt(1.0 - rho) * d_hat
    s_var = (1.0 - rho) * v
    return s_mean, s_var


def floored_inverse(r: np.ndarray, floor: float = 1e-9) -> np.ndarray:
    """Inverse through an eigendecomposition with an eigenvalue floor,
    tolerating rank-deficient empirical correlation matrices."""
    vals, vecs = np.linalg.eigh(0.5 * (r + r.conj().T))
    if vals.min() < floor:
        logger.debug("flooring %d eigenvalues below %g", int((vals < floor).sum()), floor)
    vals = np.clip(vals, floor, None)
    return (vecs / vals) @ vecs.conj().T


def kron_prior_inverse(r_spat: np.ndarray, r_freq: np.ndarray, floor: float = 1e-9) -> np.ndarray:
    """(R_spat (x) R_freq)^{-1} via per-factor floored inverses."""
    return np.kron(floored_inverse(r_spat, floor), floored_inverse(r_freq, floor))


def vmp_estimate(y_t: np.ndarray, s_mean_t: np.ndarray, s_var_t: np.ndarray,
                 prior_inv: np.ndarray, sigma_w2: float,
                 dim_cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """One-shot posterior mean of the stacked channel at one OFDM symbol.

    Shapes: y_t (N_r, K); s_mean_t / s_var_t (N_t, K); prior_inv is the
    (N_r*N_t*K)^2 inverse prior covariance. Returns (N_r, N_t, K).

    Raises DimensionCapError when N_r*N_t*K exceeds dim_cap; the decoupled
    vmp_l_estimate stays tractable in that regime.
    """
    n_r, k = y_t.shape
    n_t = s_mean_t.shape[0]
    dim = n_r * n_t * k
    if dim > dim_cap:
        raise DimensionCapError(
            f"stacked dimension {dim} exceeds cap {dim_cap}; use the decoupled "
            f"per-antenna estimator (vmp_l_estimate) for this geometry")
    if prior_inv.shape != (dim, dim):
        raise ConfigurationError(f"prior inverse must be ({dim}, {dim}), got {prior_inv.shape}")

    # S^H S = I_{N_r} (x) B with B[(n,k),(n',k)] = conj(s_n[k]) s_n'[k]
    b = np.zeros((n_t * k, n_t * k), dtype=np.complex128)
    for n in range(n_t):
        for n2 in range(n_t):
            blk = np.conj(s_mean_t[n]) * s_mean_t[n2]
            b[n * k:(n + 1) * k, n2 * k:(n2 + 1) * k] = np.diag(blk)
    sigma = sigma_w2 * prior_inv.astype(np.complex128, copy=True)
    for m in range(n_r):
        sl = slice(m * n_t * k, (m + 1) * n_t * k)
        sigma[sl, sl] += b
    diag_var = np.tile(s_var_t.reshape(-1), n_r)
    sigma[np.arange(dim), np.arange(dim)] += diag_var

    # S^H y stacks conj(s_n) * y_m over (m, n)
    rhs = (np.conj(s_mean_t)[None, :, :] * y_t[:, None, :]).reshape(dim)
    factor = cho_factor(sigma, lower=True, check_finite=False)
    h = cho_solve(factor, rhs, check_finite=False)
    return h.reshape(n_r, n_t, k)


def vmp_l_estimate(y_t: np.ndarray, s_mean_t: np.ndarray, s_var_t: np.ndarray,
                   r_freq: np.ndarray, sigma_w2: float, sweeps: int = 2,
                   r_freq_inv: np.ndarray | None = None) -> np.ndarray:
    """Sequential per-antenna variational updates at one OFDM symbol.

    Each (m, n) posterior uses the latest means of the other antennas when
    rebuilding its observation. Returns (N_r, N_t, K). Callers iterating
    over OFDM symbols can pass a precomputed r_freq_inv.
    """
    if sweeps < 1:
        raise ConfigurationError(f"sweeps must be >= 1, got {sweeps}")
    n_r, k = y_t.shape
    n_t = s_mean_t.shape[0]
    if r_freq_inv is None:
        # eigenvalue-floored inverse keeps the posterior Hermitian PSD even
        # for rank-deficient empirical correlations
        r_freq_inv = floored_inverse(r_freq, 1e-12)
    noise_term = sigma_w2 * r_freq_inv

    h = np.zeros((n_r, n_t, k), dtype=np.complex128)
    for m in range(n_r):
        for _ in range(sweeps):
            for n in range(n_t):
                y_res = y_t[m].astype(np.complex128, copy=True)
                for n2 in range(n_t):
                    if n2 != n:
                        y_res -= s_mean_t[n2] * h[m, n2]
                sigma_n = noise_term + np.diag(np.abs(s_mean_t[n]) ** 2 + s_var_t[n])
                rhs = np.conj(s_mean_t[n]) * y_res
                factor = cho_factor(sigma_n, lower=True, check_finite=False)
                h[m, n] = cho_solve(factor, rhs, check_finite=False)
    return h
