"""LS and LMMSE channel estimation, data-aided interference cancellation,
and the block-averaging despreading operator.

The separable smoother applies A_time (x) A_freq as two matrix products on
the (K, T) grid; the dense Kronecker operator is never formed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import CorrelationSet
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

__all__ = ["DespreadConfig", "ls_initial", "wiener_matrix", "lmmse_operators",
           "apply_separable", "lmmse_interpolate", "cancel_for_estimation",
           "refined_lmmse", "despread", "despread_upsample",
           "initial_noise_variance", "refined_noise_variance"]


@dataclass(frozen=True)
class DespreadConfig:
    """Averaging lengths in frequency (L1) and time (L2)."""

    L1: int = 6
    L2: int = 2

    def fd_b(self, K: int) -> int:
        if K % self.L1 != 0:
            raise ConfigurationError(f"L1={self.L1} does not divide K={K}")
        return K // self.L1


def ls_initial(y: np.ndarray, p: np.ndarray, rho: float) -> np.ndarray:
    """Elementwise least squares h = y / (sqrt(rho) * p)."""
    if rho <= 0:
        raise ConfigurationError("LS division needs rho > 0")
    y = np.asarray(y)
    p = np.asarray(p)
    if y.shape != p.shape:
        raise ConfigurationError(f"shape mismatch: {y.shape} vs {p.shape}")
    return y / (np.sqrt(rho) * p)


def wiener_matrix(r: np.ndarray, sigma2: float) -> np.ndarray:
    """R (R + sigma2 I)^{-1}, regularized when sigma2 = 0 and R is singular."""
    n = r.shape[0]
    m = r + sigma2 * np.eye(n)
    try:
        return np.linalg.solve(m.conj().T, r.conj().T).conj().T
    except np.linalg.LinAlgError:
        logger.warning("singular correlation matrix at sigma2=%g, adding 1e-12 ridge", sigma2)
        m = m + 1e-12 * np.eye(n)
        return np.linalg.solve(m.conj().T, r.conj().T).conj().T


def lmmse_operators(corr: CorrelationSet, sigma2: float):
    """(A_freq, A_time) smoothing matrices for the given effective noise."""
    return wiener_matrix(corr.R_freq, sigma2), wiener_matrix(corr.R_time, sigma2)


def apply_separable(a_freq: np.ndarray, a_time: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(A_time (x) A_freq) vec(h) computed as A_freq @ h @ A_time^T."""
    return a_freq @ h @ a_time.T


def lmmse_interpolate(h_ls: np.ndarray, corr: CorrelationSet, sigma2: float) -> np.ndarray:
    """Separable LMMSE smoothing of a (K, T) least-squares estimate."""
    h_ls = np.asarray(h_ls)
    k, t = h_ls.shape[-2:]
    if corr.R_freq.shape[0] != k or corr.R_time.shape[0] != t:
        raise ConfigurationError(
            f"correlation dims ({corr.R_freq.shape[0]}, {corr.R_time.shape[0]}) "
            f"do not match grid ({k}, {t})")
    a_freq, a_time = lmmse_operators(corr, sigma2)
    return apply_separable(a_freq, a_time, h_ls)


def cancel_for_estimation(y_m: np.ndarray, pilots: np.ndarray, soft_means: np.ndarray,
                          h_prev: np.ndarray, n: int, rho: float) -> np.ndarray:
    """Remove other-antenna pilots and all soft data from one rx antenna's
    observation, leaving (ideally) only antenna n's pilot component.

    Shapes: y_m (W,), pilots/soft_means/h_prev (N_t, W).
    """
    y = np.asarray(y_m, dtype=np.complex128).copy()
    n_t = pilots.shape[0]
    for np_ in range(n_t):
        if np_ != n:
            y -= np.sqrt(rho) * pilots[np_] * h_prev[np_]
        y -= np.sqrt(1.0 - rho) * soft_means[np_] * h_prev[np_]
    return y


def refined_lmmse(y_p: np.ndarray, p_n: np.ndarray, corr: CorrelationSet,
                  rho: float, sigma_eff2: float, K: int, T: int) -> np.ndarray:
    """LS on the cleaned observation followed by LMMSE smoothing with the
    post-cancellation effective noise variance. Returns a (K, T) estimate."""
    ls = ls_initial(y_p, p_n, rho)
    return lmmse_interpolate(ls.reshape(T, K).T, corr, sigma_eff2)


def despread(h: np.ndarray, cfg: DespreadConfig) -> np.ndarray:
    """Block mean over L1 adjacent subcarriers and L2 adjacent symbols.

    Output is (K/L1, T): each time block's mean is replicated across its L2
    columns; a final shorter block (when L2 does not divide T) is averaged
    over the remaining symbols only.
    """
    h = np.asarray(h)
    k, t = h.shape
    fd_b = cfg.fd_b(k)
    freq_avg = h.reshape(fd_b, cfg.L1, t).mean(axis=1)
    out = np.empty((fd_b, t), dtype=h.dtype)
    for start in range(0, t, cfg.L2):
        stop = min(start + cfg.L2, t)
        out[:, start:stop] = freq_avg[:, start:stop].mean(axis=1, keepdims=True)
    return out


def despread_upsample(coarse: np.ndarray, K: int, L1: int) -> np.ndarray:
    """Nearest-neighbor frequency upsampling back to the full (K, T) grid."""
    coarse = np.asarray(coarse)
    if coarse.shape[0] * L1 != K:
        raise ConfigurationError(f"cannot upsample {coarse.shape[0]} blocks to K={K} with L1={L1}")
    return np.repeat(coarse, L1, axis=0)


def initial_noise_variance(rho: float, sigma_w2: float) -> float:
    """Smoothing noise level for the pilot-only initial estimate: thermal
    noise through the unit-modulus pilot division. Cross-antenna pilot and
    data interference is deliberately NOT added here: it is near-white over
    the grid, so the correlation-subspace projection inside the separable
    smoother removes most of it, whereas inflating both shrinkage factors
    with its full power badly over-biases the estimate."""
    if rho <= 0:
        raise ConfigurationError("initial estimation needs rho > 0")
    return sigma_w2 / rho


def refined_noise_variance(rho: float, sigma_w2: float, v_mean: float) -> float:
    """Post-cancellation effective noise: thermal noise through the LS
    division plus residual data interference given the decoder's mean
    symbol variance."""
    if rho <= 0:
        raise ConfigurationError("refined estimation needs rho > 0")
    return sigma_w2 / rho + (1.0 - rho) / rho * float(v_mean)
