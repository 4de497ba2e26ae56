"""Correlated MIMO-OFDM channel generation and second-order statistics.

The propagation model is a tapped delay line with an exponential power-delay
profile (tap spacing delay_spread/2, so the RMS delay spread of the discrete
profile matches the configured value to within truncation), per-tap Jakes
Doppler evolution across OFDM symbols, and Kronecker-separable exponential
spatial correlation. Frequency response follows from the tap DFT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .errors import ConfigurationError
from .grid import FrameConfig, ResourceGrid

SPEED_OF_LIGHT = 299_792_458.0

__all__ = ["ChannelConfig", "ChannelRealization", "CorrelationSet", "NoiseSpec",
           "generate_channel", "apply_channel", "estimate_correlations"]


@dataclass(frozen=True)
class ChannelConfig:
    delay_spread: float            # seconds (RMS)
    carrier_freq: float            # Hz
    subcarrier_spacing: float      # Hz
    speed: float                   # km/h
    num_taps: int = 12
    spatial_corr_coeff: float = 0.3

    def __post_init__(self):
        if self.delay_spread <= 0:
            raise ConfigurationError(f"delay_spread must be positive, got {self.delay_spread}")
        if self.speed < 0:
            raise ConfigurationError(f"speed must be non-negative, got {self.speed}")
        if not 0.0 <= self.spatial_corr_coeff < 1.0:
            raise ConfigurationError(f"spatial_corr_coeff must lie in [0, 1), got {self.spatial_corr_coeff}")

    @property
    def doppler_hz(self) -> float:
        return (self.speed / 3.6) * self.carrier_freq / SPEED_OF_LIGHT

    @property
    def symbol_duration(self) -> float:
        # CP ignored; the simulation operates on the frequency-domain grid.
        return 1.0 / self.subcarrier_spacing


@dataclass(frozen=True)
class ChannelRealization:
    """Frequency-domain coefficients H with shape (N_r, N_t, K, T)."""

    H: np.ndarray
    seed: int

    def re_matrices(self) -> np.ndarray:
        """Per-RE channel matrices, shape (W, N_r, N_t), frequency-first w order."""
        n_r, n_t, k, t = self.H.shape
        return self.H.transpose(3, 2, 0, 1).reshape(k * t, n_r, n_t)

    def symbol_stack(self, t: int) -> np.ndarray:
        """Stacked space-frequency vector at symbol t: (m, n) pairs in
        m-major order, each of length K."""
        return self.H[:, :, :, t].reshape(-1)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_w2: float
    snr_db: float

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "NoiseSpec":
        return cls(sigma_w2=10.0 ** (-snr_db / 10.0), snr_db=snr_db)


@dataclass(frozen=True)
class CorrelationSet:
    """Empirical second-order channel statistics, unit-diagonal normalized."""

    R_time: np.ndarray     # (T, T)
    R_freq: np.ndarray     # (K, K)
    R_spat: np.ndarray     # (N_r*N_t, N_r*N_t), m-major stacking
    sample_count: int


def _hermitian_sqrt(r: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(r)
    # zero out numerically-spurious eigenvalues so rank-deficient targets
    # (e.g. the all-ones matrix at zero Doppler) stay exactly rank-deficient
    vals[vals < max(float(vals.max()), 0.0) * 1e-10] = 0.0
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def _exponential_corr(n: int, a: float) -> np.ndarray:
    idx = np.arange(n)
    return a ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def tap_profile(cfg: ChannelConfig):
    """(delays, powers) of the exponential tapped delay line, sum(power) = 1."""
    spacing = cfg.delay_spread / 2.0
    delays = np.arange(cfg.num_taps) * spacing
    powers = np.exp(-delays / cfg.delay_spread)
    return delays, powers / powers.sum()


def time_correlation(cfg: ChannelConfig, T: int) -> np.ndarray:
    """Jakes autocorrelation matrix J0(2 pi f_D |dt|) over OFDM symbols."""
    lags = np.arange(T, dtype=float) * cfg.symbol_duration
    row = j0(2.0 * np.pi * cfg.doppler_hz * lags)
    idx = np.abs(np.arange(T)[:, None] - np.arange(T)[None, :])
    return row[idx]


def generate_channel(cfg: ChannelConfig, frame: FrameConfig, seed: int) -> ChannelRealization:
    """Draw one channel realization; identical (cfg, frame, seed) gives a
    bit-identical result."""
    rng = np.random.default_rng(seed)
    delays, powers = tap_profile(cfg)
    n_r, n_t, K, T = frame.N_r, frame.N_t, frame.K, frame.T

    z = (rng.standard_normal((cfg.num_taps, n_r, n_t, T))
         + 1j * rng.standard_normal((cfg.num_taps, n_r, n_t, T))) / np.sqrt(2.0)

    a = cfg.spatial_corr_coeff
    if a > 0:
        sq_r = _hermitian_sqrt(_exponential_corr(n_r, a))
        sq_t = _hermitian_sqrt(_exponential_corr(n_t, a))
        z = np.einsum("ij,ljnt->lint", sq_r, z)
        z = np.einsum("ij,lmjt->lmit", sq_t, z)

    c_time = _hermitian_sqrt(time_correlation(cfg, T))
    g = np.einsum("ts,lmns->lmnt", c_time, z)
    g *= np.sqrt(powers)[:, None, None, None]

    freqs = np.arange(K) * cfg.subcarrier_spacing
    phases = np.exp(-2j * np.pi * np.outer(freqs, delays))   # (K, L)
    h = np.einsum("kl,lmnt->mnkt", phases, g)
    return ChannelRealization(H=h, seed=seed)


def apply_channel(grid: ResourceGrid, chan: ChannelRealization, noise: NoiseSpec,
                  seed: int) -> np.ndarray:
    """Received grid y[m,k,t] = sum_n s[n,k,t] h[m,n,k,t] + AWGN."""
    cells = grid.cells
    if cells.shape != chan.H.shape[1:]:
        raise ConfigurationError(f"grid {cells.shape} does not match channel {chan.H.shape[1:]}")
    y = np.einsum("nkt,mnkt->mkt", cells, chan.H)
    if noise.sigma_w2 > 0:
        rng = np.random.default_rng(seed)
        w = (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        y = y + w * np.sqrt(noise.sigma_w2 / 2.0)
    return y


def _normalize_unit_diag(r: np.ndarray) -> np.ndarray:
    r = 0.5 * (r + r.conj().T)
    d = np.sqrt(np.clip(np.real(np.diag(r)), 1e-30, None))
    return r / np.outer(d, d)


def estimate_correlations(samples) -> CorrelationSet:
    """Averaged outer products over the complementary dimensions of a batch
    of realizations, normalized to unit diagonal."""
    samples = list(samples)
    if len(samples) < 2:
        raise ConfigurationError("need at least 2 channel samples")
    n_r, n_t, K, T = samples[0].H.shape
    h = np.stack([s.H for s in samples])                    # (S, N_r, N_t, K, T)

    x_t = h.reshape(-1, T)                                  # rows over (S, m, n, k)
    r_time = x_t.T @ x_t.conj() / x_t.shape[0]

    x_f = h.transpose(0, 1, 2, 4, 3).reshape(-1, K)         # (S*m*n*T, K)
    r_freq = x_f.T @ x_f.conj() / x_f.shape[0]

    x_s = h.transpose(0, 3, 4, 1, 2).reshape(-1, n_r * n_t)  # (S*K*T, m-major)
    r_spat = x_s.T @ x_s.conj() / x_s.shape[0]

    return CorrelationSet(R_time=_normalize_unit_diag(r_time),
                          R_freq=_normalize_unit_diag(r_freq),
                          R_spat=_normalize_unit_diag(r_spat),
                          sample_count=len(samples))
