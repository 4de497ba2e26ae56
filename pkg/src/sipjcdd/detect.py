"""Per-RE MMSE detection with pilot interference removal, max-log extrinsic
LLRs, and decoder-feedback soft remapping with symbol variances and
confidence scores.

LLRs follow the package convention: positive means bit 0 is more likely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fec import LLR_CLAMP
from .grid import ModulationSpec

logger = logging.getLogger(__name__)

MU_CLAMP = 1e-6

__all__ = ["DetectorOutput", "SoftSymbolSet", "mmse_ic_detect", "extrinsic_llr",
           "soft_remap", "hard_bits"]


@dataclass(frozen=True)
class DetectorOutput:
    """Bias-corrected equalized symbols with per-stream reliability factors."""

    d_tilde: np.ndarray   # (W, N_t)
    mu: np.ndarray        # (W, N_t) in (0, 1)
    eta: np.ndarray       # (W, N_t) = mu / (1 - mu)


@dataclass(frozen=True)
class SoftSymbolSet:
    """Decoder feedback per antenna and RE: soft means, variances, logits,
    and the top-two-logit confidence gap."""

    d_hat: np.ndarray     # (N_t, W) complex
    v_tilde: np.ndarray   # (N_t, W) >= 0
    logits: np.ndarray    # (N_t, W, M)
    g: np.ndarray         # (N_t, W) >= 0


def mmse_ic_detect(y: np.ndarray, h_hat: np.ndarray, p: np.ndarray,
                   rho: float, sigma_w2: float) -> DetectorOutput:
    """Batched MMSE detection over all REs.

    Shapes: y (W, N_r), h_hat (W, N_r, N_t), p (W, N_t). The known pilot
    component sqrt(rho) * H p is subtracted before equalizing the scaled
    channel sqrt(1-rho) * H.
    """
    y = np.asarray(y)
    h_hat = np.asarray(h_hat)
    if not np.all(np.isfinite(h_hat)):
        raise ConfigurationError("channel estimate contains non-finite entries")
    w_count, n_r, n_t = h_hat.shape

    y_d = y - np.sqrt(rho) * np.einsum("wrt,wt->wr", h_hat, p)
    h_tilde = np.sqrt(1.0 - rho) * h_hat

    gram = np.einsum("wrt,wst->wrs", h_tilde, h_tilde.conj())
    eye = np.eye(n_r)
    reg = sigma_w2 if sigma_w2 > 0 else 1e-12
    if sigma_w2 <= 0:
        logger.debug("noiseless detection, adding 1e-12 diagonal loading")
    gram = gram + reg * eye
    g = np.linalg.solve(gram, h_tilde).conj().transpose(0, 2, 1)   # (W, N_t, N_r)

    mu = np.real(np.einsum("wtr,wrt->wt", g, h_tilde))
    mu = np.clip(mu, MU_CLAMP, 1.0 - MU_CLAMP)
    d_tilde = np.einsum("wtr,wr->wt", g, y_d) / mu
    eta = mu / (1.0 - mu)
    return DetectorOutput(d_tilde=d_tilde, mu=mu, eta=eta)


def extrinsic_llr(d_tilde: np.ndarray, eta: np.ndarray, spec: ModulationSpec) -> np.ndarray:
    """Max-log LLRs: eta * (min distance^2 over bit-1 points minus min over
    bit-0 points), clamped to +-LLR_CLAMP. Shape (n, Q)."""
    d = np.asarray(d_tilde).reshape(-1)
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64).reshape(-1), d.shape)
    d2 = np.abs(d[:, None] - spec.constellation[None, :]) ** 2    # (n, M)
    llr = np.empty((d.size, spec.Q))
    for q in range(spec.Q):
        zero = spec.bit_labels[:, q] == 0
        m0 = d2[:, zero].min(axis=1)
        m1 = d2[:, ~zero].min(axis=1)
        llr[:, q] = eta * (m1 - m0)
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def soft_remap(llr_a: np.ndarray, spec: ModulationSpec):
    """Posterior over constellation points from per-bit prior LLRs.

    Returns (d_hat (n,), v_tilde (n,), logits (n, M), g (n,)): the soft
    symbol mean, its variance, the per-point log scores, and the gap between
    the two largest scores (shift-invariant confidence).
    """
    llr = np.asarray(llr_a, dtype=np.float64)
    if llr.ndim != 2 or llr.shape[1] != spec.Q:
        raise ConfigurationError(f"LLR array must be (n, {spec.Q}), got {llr.shape}")
    s0 = _log_sigmoid(llr)          # log P(bit = 0)
    s1 = _log_sigmoid(-llr)         # log P(bit = 1)
    b = spec.bit_labels.astype(np.float64)                 # (M, Q)
    logits = s1 @ b.T + s0 @ (1.0 - b).T                   # (n, M)

    shifted = logits - logits.max(axis=1, keepdims=True)
    post = np.exp(shifted)
    post /= post.sum(axis=1, keepdims=True)

    d_hat = post @ spec.constellation
    v_tilde = np.clip(np.real(post @ (np.abs(spec.constellation) ** 2)) - np.abs(d_hat) ** 2,
                      0.0, None)
    top2 = np.partition(logits, -2, axis=1)[:, -2:]
    g = np.abs(top2[:, 1] - top2[:, 0])
    return d_hat, v_tilde, logits, g


def hard_bits(llr: np.ndarray) -> np.ndarray:
    """Hard decision under the positive-means-zero convention."""
    return (np.asarray(llr) < 0).astype(np.uint8)
