"""Iterative joint channel estimation / detection / decoding over one frame,
plus the conventional orthogonal-pilot receiver and the external-estimator
bridge.

Iteration 1 always runs pilot-only initial estimation; later iterations
re-estimate with decoder feedback using the configured refined estimator
(separable LMMSE with interference cancellation, stacked or decoupled
variational updates, or an external learned estimator reached through the
tensor-file protocol)."""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import detect as det
from . import fec, linear, vmp
from .channel import ChannelRealization, CorrelationSet, NoiseSpec
from .errors import (ConfigurationError, EndpointError, EndpointTimeout,
                     EstimatorFailure)
from .grid import (FrameConfig, ModulationSpec, OpPilotPattern, PilotSet,
                   grid_to_vec, op_masks, op_pilot_values, vec_to_grid)
from .wire import read_tensors, write_tensors, expect_shape

logger = logging.getLogger(__name__)

ESTIMATOR_VARIANTS = ("lmmse", "vmp", "vmp-l", "dl")

__all__ = ["JcddConfig", "FrameResult", "run_jcdd", "run_op_receiver",
           "call_dl_estimator", "refined_estimate", "ESTIMATOR_VARIANTS"]


@dataclass
class JcddConfig:
    iterations: int = 2
    estimator: str = "lmmse"
    vmp_sweeps: int = 2
    vmp_dim_cap: int = vmp.DEFAULT_DIM_CAP
    genie: bool = False
    dl_endpoint: str | None = None
    dl_timeout: float = 30.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.estimator not in ESTIMATOR_VARIANTS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "dl" and not self.genie and self.dl_endpoint is None:
            raise ConfigurationError("dl estimator requires dl_endpoint")


@dataclass
class FrameResult:
    decoded: np.ndarray                 # (N_t, n_info) hard information bits
    converged: np.ndarray               # (N_t,) decoder convergence flags
    block_error: np.ndarray | None      # (N_t,) bool, when tx bits known
    mse_per_iter: list                  # channel MSE after estimation, per iteration
    telemetry: dict = field(default_factory=dict)


class _Workspace:
    """Per-cell cache of quantities that only depend on (corr, geometry)."""

    def __init__(self):
        self.prior_inv = None
        self.freq_inv = None
        self.lmmse_ops = {}

    def ops(self, corr: CorrelationSet, sigma2: float):
        key = round(float(sigma2), 12)
        if key not in self.lmmse_ops:
            self.lmmse_ops[key] = linear.lmmse_operators(corr, sigma2)
        return self.lmmse_ops[key]

    def prior(self, corr: CorrelationSet):
        if self.prior_inv is None:
            self.prior_inv = vmp.kron_prior_inverse(corr.R_spat, corr.R_freq)
        return self.prior_inv

    def freq_prior(self, corr: CorrelationSet):
        if self.freq_inv is None:
            self.freq_inv = vmp.floored_inverse(corr.R_freq, 1e-12)
        return self.freq_inv


def _estimate_mse(h_est: np.ndarray, genie: ChannelRealization | None) -> float | None:
    if genie is None:
        return None
    return float(np.mean(np.abs(h_est - genie.H) ** 2))


def _smooth_links(ls_grids: np.ndarray, a_freq: np.ndarray, a_time: np.ndarray) -> np.ndarray:
    return np.einsum("ab,mnbt,ct->mnac", a_freq, ls_grids, a_time, optimize=True)


def _initial_estimate(frame: FrameConfig, y_vec: np.ndarray, pilots: PilotSet,
                      corr: CorrelationSet, noise: NoiseSpec, ws: _Workspace) -> np.ndarray:
    sigma_init = linear.initial_noise_variance(frame.rho, noise.sigma_w2)
    a_freq, a_time = ws.ops(corr, sigma_init)
    ls = y_vec[:, None, :] / (np.sqrt(frame.rho) * pilots.p[None, :, :])
    ls_grids = vec_to_grid(ls, frame.K, frame.T)
    return _smooth_links(ls_grids, a_freq, a_time)


def _refined_ls_links(frame: FrameConfig, y_vec: np.ndarray, pilots: PilotSet,
                      soft: det.SoftSymbolSet, h_prev: np.ndarray) -> np.ndarray:
    """Interference-cancelled LS per link, shape (N_r, N_t, K, T)."""
    h_prev_vec = grid_to_vec(h_prev)
    out = np.empty((frame.N_r, frame.N_t, frame.W), dtype=np.complex128)
    for m in range(frame.N_r):
        for n in range(frame.N_t):
            y_p = linear.cancel_for_estimation(y_vec[m], pilots.p, soft.d_hat,
                                               h_prev_vec[m], n, frame.rho)
            out[m, n] = linear.ls_initial(y_p, pilots.p[n], frame.rho)
    return vec_to_grid(out, frame.K, frame.T)


def refined_estimate(frame: FrameConfig, y: np.ndarray, y_vec: np.ndarray,
                     pilots: PilotSet, soft: det.SoftSymbolSet, h_prev: np.ndarray,
                     corr: CorrelationSet, noise: NoiseSpec, cfg: JcddConfig,
                     ws: _Workspace | None = None) -> np.ndarray:
    """Dispatch one data-aided re-estimation pass; returns (N_r, N_t, K, T)."""
    ws = ws or _Workspace()
    if cfg.estimator == "lmmse":
        sigma_eff = linear.refined_noise_variance(frame.rho, noise.sigma_w2,
                                                  float(np.mean(soft.v_tilde)))
        a_freq, a_time = ws.ops(corr, sigma_eff)
        ls_grids = _refined_ls_links(frame, y_vec, pilots, soft, h_prev)
        return _smooth_links(ls_grids, a_freq, a_time)

    if cfg.estimator in ("vmp", "vmp-l"):
        s_mean, s_var = vmp.soft_transmit_stats(pilots.p, soft.d_hat, soft.v_tilde, frame.rho)
        s_grid = vec_to_grid(s_mean, frame.K, frame.T)
        v_grid = vec_to_grid(s_var, frame.K, frame.T)
        h_est = np.empty((frame.N_r, frame.N_t, frame.K, frame.T), dtype=np.complex128)
        if cfg.estimator == "vmp":
            prior_inv = ws.prior(corr)
            for t in range(frame.T):
                h_est[:, :, :, t] = vmp.vmp_estimate(y[:, :, t], s_grid[:, :, t],
                                                     v_grid[:, :, t], prior_inv,
                                                     noise.sigma_w2, cfg.vmp_dim_cap)
        else:
            freq_inv = ws.freq_prior(corr)
            for t in range(frame.T):
                h_est[:, :, :, t] = vmp.vmp_l_estimate(y[:, :, t], s_grid[:, :, t],
                                                       v_grid[:, :, t], corr.R_freq,
                                                       noise.sigma_w2, cfg.vmp_sweeps,
                                                       r_freq_inv=freq_inv)
        return h_est

    if cfg.estimator == "dl":
        ls_grids = _refined_ls_links(frame, y_vec, pilots, soft, h_prev)
        g_grid = vec_to_grid(soft.g, frame.K, frame.T)
        return call_dl_estimator(ls_grids, g_grid, noise.sigma_w2,
                                 cfg.dl_endpoint, timeout=cfg.dl_timeout)

    raise ConfigurationError(f"unknown estimator {cfg.estimator!r}")


def _detect_and_decode(frame: FrameConfig, y_re: np.ndarray, p_re: np.ndarray,
                       h_est: np.ndarray, mod: ModulationSpec, code: fec.CodeConfig,
                       noise: NoiseSpec):
    h_re = h_est.transpose(3, 2, 0, 1).reshape(frame.W, frame.N_r, frame.N_t)
    out = det.mmse_ic_detect(y_re, h_re, p_re, frame.rho, noise.sigma_w2)
    llrs = np.stack([det.extrinsic_llr(out.d_tilde[:, n], out.eta[:, n], mod).reshape(-1)
                     for n in range(frame.N_t)])
    if llrs.shape[1] != code.n_code:
        raise ConfigurationError(
            f"LLR stream length {llrs.shape[1]} != codeword length {code.n_code}")
    info, post, conv = fec.decode_batch(llrs, code)
    return info, post, conv


def run_jcdd(frame: FrameConfig, y: np.ndarray, pilots: PilotSet, mod: ModulationSpec,
             code: fec.CodeConfig, corr: CorrelationSet, noise: NoiseSpec,
             cfg: JcddConfig, genie_H: ChannelRealization | None = None,
             tx_bits: np.ndarray | None = None) -> FrameResult:
    """Run the iterative receiver on one received frame y (N_r, K, T)."""
    if cfg.genie and genie_H is None:
        raise ConfigurationError("genie receiver needs the true channel")
    y = np.asarray(y)
    if y.shape != (frame.N_r, frame.K, frame.T):
        raise ConfigurationError(f"received grid {y.shape} != {(frame.N_r, frame.K, frame.T)}")
    y_vec = grid_to_vec(y)
    y_re = y_vec.T
    p_re = pilots.p.T
    ws = _Workspace()

    soft = None
    mse_per_iter = []
    telemetry = {"iterations": cfg.iterations, "soft_remap_calls": 0,
                 "refine_calls": 0, "refine_wall_ms": []}
    info = post = conv = None

    for i in range(1, cfg.iterations + 1):
        if cfg.genie:
            h_est = genie_H.H
        elif i == 1:
            h_est = _initial_estimate(frame, y_vec, pilots, corr, noise, ws)
        else:
            t0 = time.perf_counter()
            try:
                h_est = refined_estimate(frame, y, y_vec, pilots, soft, h_est,
                                         corr, noise, cfg, ws)
            except Exception as e:
                raise EstimatorFailure(f"refined estimation failed at iteration {i}: {e}") from e
            telemetry["refine_calls"] += 1
            telemetry["refine_wall_ms"].append((time.perf_counter() - t0) * 1e3)
        mse = _estimate_mse(h_est, genie_H)
        if mse is not None:
            mse_per_iter.append(mse)

        info, post, conv = _detect_and_decode(frame, y_re, p_re, h_est, mod, code, noise)

        if i < cfg.iterations:
            d_hat = np.empty((frame.N_t, frame.W), dtype=np.complex128)
            v_tilde = np.empty((frame.N_t, frame.W))
            logits = np.empty((frame.N_t, frame.W, mod.M))
            g = np.empty((frame.N_t, frame.W))
            for n in range(frame.N_t):
                d_hat[n], v_tilde[n], logits[n], g[n] = det.soft_remap(
                    post[n].reshape(frame.W, mod.Q), mod)
            soft = det.SoftSymbolSet(d_hat=d_hat, v_tilde=v_tilde, logits=logits, g=g)
            telemetry["soft_remap_calls"] += 1

    block_error = None
    if tx_bits is not None:
        block_error = np.array([bool(np.any(info[n] != tx_bits[n]))
                                for n in range(frame.N_t)])
    return FrameResult(decoded=info, converged=conv, block_error=block_error,
                       mse_per_iter=mse_per_iter, telemetry=telemetry)


def run_op_receiver(frame: FrameConfig, y: np.ndarray, pattern: OpPilotPattern,
                    corr: CorrelationSet, noise: NoiseSpec, mod: ModulationSpec,
                    code: fec.CodeConfig, tx_bits: np.ndarray | None = None,
                    genie_H: ChannelRealization | None = None) -> FrameResult:
    """Conventional orthogonal-pilot receiver: comb LS, Wiener interpolation
    to the full grid, MMSE detection on data REs, single decoding pass."""
    y = np.asarray(y)
    pilot_vals = op_pilot_values(frame, pattern)
    pilot_t, data_mask = op_masks(frame, pattern)
    t_p = np.asarray(pattern.pilot_symbol_indices)

    a_time_obs = corr.R_time[np.ix_(t_p, t_p)] + noise.sigma_w2 * np.eye(t_p.size)
    a_time = corr.R_time[:, t_p] @ np.linalg.inv(a_time_obs)
    h_est = np.empty((frame.N_r, frame.N_t, frame.K, frame.T), dtype=np.complex128)
    for n in range(frame.N_t):
        comb = np.arange(n, frame.K, frame.N_t)
        r_obs = corr.R_freq[np.ix_(comb, comb)] + noise.sigma_w2 * np.eye(comb.size)
        a_freq = corr.R_freq[:, comb] @ np.linalg.inv(r_obs)
        p_vals = pilot_vals[n][np.ix_(comb, t_p)]
        for m in range(frame.N_r):
            ls = y[m][np.ix_(comb, t_p)] / p_vals
            h_est[m, n] = a_freq @ ls @ a_time.T

    mse = _estimate_mse(h_est, genie_H)

    data_syms = np.where(~pilot_t)[0]
    ks = np.tile(np.arange(frame.K), data_syms.size)
    ts = np.repeat(data_syms, frame.K)
    y_data = y[:, ks, ts].T                                   # (n_data, N_r)
    h_data = h_est[:, :, ks, ts].transpose(2, 0, 1)           # (n_data, N_r, N_t)
    p_zero = np.zeros((y_data.shape[0], frame.N_t))
    out = det.mmse_ic_detect(y_data, h_data, p_zero, 0.0, noise.sigma_w2)
    llrs = np.stack([det.extrinsic_llr(out.d_tilde[:, n], out.eta[:, n], mod).reshape(-1)
                     for n in range(frame.N_t)])
    if llrs.shape[1] != code.n_code:
        raise ConfigurationError(
            f"OP LLR stream length {llrs.shape[1]} != codeword length {code.n_code}")
    info, post, conv = fec.decode_batch(llrs, code)

    block_error = None
    if tx_bits is not None:
        block_error = np.array([bool(np.any(info[n] != tx_bits[n]))
                                for n in range(frame.N_t)])
    return FrameResult(decoded=info, converged=conv, block_error=block_error,
                       mse_per_iter=[mse] if mse is not None else [],
                       telemetry={"iterations": 1, "soft_remap_calls": 0,
                                  "refine_calls": 0, "refine_wall_ms": []})


def call_dl_estimator(ls_refined: np.ndarray, confidence: np.ndarray, sigma_w2: float,
                      endpoint: str, timeout: float = 30.0) -> np.ndarray:
    """Ship refined LS estimates and confidences to an external estimator
    process and read back the channel estimate of identical grid shape."""
    if not endpoint:
        raise ConfigurationError("no estimator endpoint configured")
    n_r, n_t, k, t = ls_refined.shape
    expect_shape(confidence, (n_t, k, t))
    req_tensor = np.stack([ls_refined.real, ls_refined.imag]).astype(np.float32)

    with tempfile.TemporaryDirectory(prefix="sipjcdd_rpc_") as tmp:
        req = os.path.join(tmp, "request.bin")
        resp = os.path.join(tmp, "response.bin")
        write_tensors(req, [req_tensor, confidence.astype(np.float32),
                            np.array([sigma_w2], dtype=np.float32)])
        cmd = shlex.split(endpoint) + ["--request", req, "--response", resp]
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=timeout)
        except subprocess.TimeoutExpired as e:
            raise EndpointTimeout(f"estimator endpoint timed out after {timeout}s") from e
        if proc.returncode != 0:
            raise EndpointError(
                f"estimator endpoint exited with {proc.returncode}: "
                f"{proc.stderr.decode(errors='replace')[-500:]}")
        tensors = read_tensors(resp)
        if len(tensors) != 1:
            raise EndpointError(f"expected 1 response tensor, got {len(tensors)}")
        h = expect_shape(tensors[0], (2, n_r, n_t, k, t))
    return (h[0] + 1j * h[1]).astype(np.complex128)
