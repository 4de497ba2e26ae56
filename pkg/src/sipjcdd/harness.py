"""Monte-Carlo sweep engine, metrics, dataset export, and estimator
evaluation.

Seeding is counter-based: every random draw comes from a generator keyed by
(base_seed, stream id, quantized speed, quantized SNR, frame index), so
results are independent of worker count and scheduling, and all receiver
variants in a sweep see the same channels, payloads, and noise. The sweep
CSV contains only deterministic metrics; wall-clock telemetry lives on the
in-memory report.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import detect as det
from . import fec, linear
from .channel import (ChannelConfig, CorrelationSet, NoiseSpec, apply_channel,
                      estimate_correlations, generate_channel)
from .errors import ConfigurationError
from .grid import (FrameConfig, OpPilotPattern, build_op_grid, build_sip_grid,
                   generate_pilots, grid_to_vec, modulate, qam_spec, vec_to_grid)
from .receiver import (JcddConfig, _initial_estimate, _refined_ls_links, _Workspace,
                       _detect_and_decode, run_jcdd, run_op_receiver)
from .wire import DatasetWriter, load_correlations, read_dataset

logger = logging.getLogger(__name__)

# rng stream tags
_S_BITS, _S_CHAN, _S_NOISE, _S_STATS, _S_DATA = 1, 2, 3, 4, 5

CSV_HEADER = ["variant", "speed_kmh", "snr_db", "frames", "blocks", "block_errors",
              "bler", "bler_lo", "bler_hi", "omega", "throughput_bits",
              "mse_first", "mse_last", "status"]

__all__ = ["SweepConfig", "VariantSpec", "CellResult", "SimReport", "throughput",
           "wilson_interval", "parse_config", "load_config", "run_sweep",
           "export_dataset", "eval_estimator", "correlations_for"]


def throughput(K: int, T: int, omega: float, r: float, Q: int, bler: float) -> float:
    """Correctly received information bits per frame per stream."""
    return K * T * omega * r * Q * (1.0 - bler)


def wilson_interval(errors: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = errors / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class VariantSpec:
    """One receiver configuration of a sweep cell."""

    name: str
    kind: str                  # "sip" | "op"
    estimator: str = "lmmse"   # sip only
    iterations: int = 2
    genie: bool = False
    rho_override: float | None = None
    pattern: str | None = None  # op only

    @classmethod
    def parse(cls, token: str, default_iterations: int) -> "VariantSpec":
        name = token.strip()
        body, _, it = name.partition("@")
        iters = int(it) if it else default_iterations
        if body.startswith("op-"):
            pat = body[3:].upper()
            return cls(name=name, kind="op", iterations=1, pattern=pat)
        if body == "csi":
            return cls(name=name, kind="sip", iterations=1, genie=True, rho_override=0.0)
        if body == "sip-csi":
            return cls(name=name, kind="sip", iterations=iters, genie=True)
        if body.startswith("sip-"):
            est = body[4:]
            return cls(name=name, kind="sip", estimator=est, iterations=iters)
        raise ConfigurationError(f"unknown variant {token!r}")


@dataclass
class SweepConfig:
    frame: FrameConfig
    channel: ChannelConfig          # speed field is a placeholder; cells override
    snr_db: list
    speeds_kmh: list
    variants: list                  # of VariantSpec
    frames_per_cell: int
    base_seed: int
    code_seed: int = 1
    code_iters: int = 25
    code_alist: str | None = None   # optional parity-check file for the SIP code
    stats_samples: int = 2000
    stats_seed: int = 777
    stats_speed_kmh: float | None = None   # None -> matched to each test speed
    receiver_iterations: int = 2
    vmp_sweeps: int = 2
    vmp_dim_cap: int = 2048
    dl_endpoint: str | None = None
    dl_timeout: float = 30.0
    workers: int | None = None
    corr_path: str | None = None    # optional precomputed correlation file


def parse_config(doc: dict) -> SweepConfig:
    """Validate and build a SweepConfig from a parsed JSON document."""
    try:
        fr = doc["frame"]
        frame = FrameConfig(K=int(fr["K"]), T=int(fr["T"]), N_t=int(fr["n_t"]),
                            N_r=int(fr["n_r"]), rho=float(fr.get("rho", 0.3)),
                            mod_order=int(fr.get("mod_order", 16)))
        ch = doc.get("channel", {})
        chan = ChannelConfig(
            delay_spread=float(ch.get("delay_spread_ns", 200.0)) * 1e-9,
            carrier_freq=float(ch.get("carrier_freq_ghz", 3.5)) * 1e9,
            subcarrier_spacing=float(ch.get("subcarrier_spacing_khz", 30.0)) * 1e3,
            speed=0.0,
            num_taps=int(ch.get("num_taps", 12)),
            spatial_corr_coeff=float(ch.get("spatial_corr_coeff", 0.3)))
        sw = doc["sweep"]
        rx = doc.get("receiver", {})
        stats = doc.get("stats", {})
        code = doc.get("code", {})
        default_iters = int(rx.get("iterations", 2))
        variants = [VariantSpec.parse(v, default_iters) for v in sw["variants"]]
        cfg = SweepConfig(
            frame=frame, channel=chan,
            snr_db=[float(x) for x in sw["snr_db"]],
            speeds_kmh=[float(x) for x in sw["speeds_kmh"]],
            variants=variants,
            frames_per_cell=int(sw["frames_per_cell"]),
            base_seed=int(sw.get("base_seed", 1)),
            code_seed=int(code.get("seed", 1)),
            code_iters=int(code.get("max_iters", 25)),
            code_alist=code.get("alist_path"),
            stats_samples=int(stats.get("samples", 2000)),
            stats_seed=int(stats.get("seed", 777)),
            stats_speed_kmh=(None if stats.get("speed_kmh") is None
                             else float(stats["speed_kmh"])),
            receiver_iterations=default_iters,
            vmp_sweeps=int(rx.get("vmp_sweeps", 2)),
            vmp_dim_cap=int(rx.get("vmp_dim_cap", 2048)),
            dl_endpoint=rx.get("dl_endpoint"),
            dl_timeout=float(rx.get("dl_timeout", 30.0)),
            workers=(None if sw.get("workers") is None else int(sw["workers"])),
            corr_path=stats.get("corr_path"))
    except KeyError as e:
        raise ConfigurationError(f"missing config key {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"bad config value: {e}") from e
    if not cfg.snr_db or not cfg.speeds_kmh or not cfg.variants:
        raise ConfigurationError("snr_db, speeds_kmh, and variants must be non-empty")
    if cfg.frames_per_cell < 1:
        raise ConfigurationError("frames_per_cell must be >= 1")
    return cfg


def load_config(path) -> SweepConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return parse_config(doc)


def _q(value: float) -> int:
    return int(round(value * 1000.0))


@lru_cache(maxsize=8)
def _alist_code(path: str, max_iters: int) -> fec.CodeConfig:
    return fec.code_from_parity(fec.load_alist(path), max_iters=max_iters)


def correlations_for(cfg: SweepConfig, speed_kmh: float) -> CorrelationSet:
    """Empirical second-order statistics at the given UE speed."""
    chan = ChannelConfig(delay_spread=cfg.channel.delay_spread,
                         carrier_freq=cfg.channel.carrier_freq,
                         subcarrier_spacing=cfg.channel.subcarrier_spacing,
                         speed=speed_kmh, num_taps=cfg.channel.num_taps,
                         spatial_corr_coeff=cfg.channel.spatial_corr_coeff)
    samples = [generate_channel(chan, cfg.frame, [cfg.stats_seed, _S_STATS, _q(speed_kmh), i])
               for i in range(cfg.stats_samples)]
    return estimate_correlations(samples)


def _sip_frame_for(cfg: SweepConfig, variant: VariantSpec) -> FrameConfig:
    rho = cfg.frame.rho if variant.rho_override is None else variant.rho_override
    return FrameConfig(K=cfg.frame.K, T=cfg.frame.T, N_t=cfg.frame.N_t,
                       N_r=cfg.frame.N_r, rho=rho, mod_order=cfg.frame.mod_order)


@dataclass
class _CellJob:
    """Everything one worker needs to simulate frames of one cell."""

    variant: VariantSpec
    frame: FrameConfig
    channel: ChannelConfig
    code: fec.CodeConfig
    corr: CorrelationSet
    noise: NoiseSpec
    base_seed: int
    speed_kmh: float
    snr_db: float
    jcdd: JcddConfig | None
    pattern: OpPilotPattern | None


def _simulate_sip_frame(job: _CellJob, idx: int):
    frame, mod = job.frame, qam_spec(job.frame.mod_order)
    key = [job.base_seed, _q(job.speed_kmh), _q(job.snr_db), idx]
    bits_rng = np.random.default_rng(key + [_S_BITS])
    tx_bits = bits_rng.integers(0, 2, size=(frame.N_t, job.code.n_info), dtype=np.uint8)
    coded = fec.encode(tx_bits, job.code)
    data = np.stack([modulate(coded[n], mod) for n in range(frame.N_t)])
    pilots = generate_pilots(frame)
    grid = build_sip_grid(frame, pilots, data)
    chan = generate_channel(job.channel, frame, key + [_S_CHAN])
    y = apply_channel(grid, chan, job.noise, key + [_S_NOISE])
    return run_jcdd(frame, y, pilots, mod, job.code, job.corr, job.noise,
                    job.jcdd, genie_H=chan, tx_bits=tx_bits)


def _simulate_op_frame(job: _CellJob, idx: int):
    frame, mod = job.frame, qam_spec(job.frame.mod_order)
    key = [job.base_seed, _q(job.speed_kmh), _q(job.snr_db), idx]
    bits_rng = np.random.default_rng(key + [_S_BITS])
    tx_bits = bits_rng.integers(0, 2, size=(frame.N_t, job.code.n_info), dtype=np.uint8)
    coded = fec.encode(tx_bits, job.code)
    data = np.stack([modulate(coded[n], mod) for n in range(frame.N_t)])
    grid = build_op_grid(frame, job.pattern, data)
    chan = generate_channel(job.channel, frame, key + [_S_CHAN])
    y = apply_channel(grid, chan, job.noise, key + [_S_NOISE])
    return run_op_receiver(frame, y, job.pattern, job.corr, job.noise, mod,
                           job.code, tx_bits=tx_bits, genie_H=chan)


def _run_chunk(job: _CellJob, indices):
    out = []
    for idx in indices:
        res = (_simulate_op_frame if job.variant.kind == "op" else _simulate_sip_frame)(job, idx)
        out.append((idx, res.block_error.copy(),
                    list(res.mse_per_iter),
                    float(sum(res.telemetry["refine_wall_ms"]))))
    return out


@dataclass
class CellResult:
    variant: str
    speed_kmh: float
    snr_db: float
    frames: int
    blocks: int
    block_errors: int
    bler: float
    bler_lo: float
    bler_hi: float
    omega: float
    throughput_bits: float
    mse_first: float
    mse_last: float
    status: str = "ok"
    wall_s: float = 0.0
    refine_wall_ms_mean: float = 0.0

    def csv_row(self):
        def fmt(x):
            return format(float(x), ".10g")
        return [self.variant, fmt(self.speed_kmh), fmt(self.snr_db), str(self.frames),
                str(self.blocks), str(self.block_errors), fmt(self.bler),
                fmt(self.bler_lo), fmt(self.bler_hi), fmt(self.omega),
                fmt(self.throughput_bits), fmt(self.mse_first), fmt(self.mse_last),
                self.status]


@dataclass
class SimReport:
    cells: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for cell in self.cells:
                w.writerow(cell.csv_row())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(CSV_HEADER)
        for cell in self.cells:
            w.writerow(cell.csv_row())
        return buf.getvalue()


def _worker_count(cfg: SweepConfig) -> int:
    env = os.environ.get("SIP_JCDD_THREADS")
    if env:
        return max(1, int(env))
    if cfg.workers:
        return max(1, cfg.workers)
    return 1


def _build_job(cfg: SweepConfig, variant: VariantSpec, corr: CorrelationSet,
               speed: float, snr: float) -> _CellJob:
    noise = NoiseSpec.from_snr_db(snr)
    chan = ChannelConfig(delay_spread=cfg.channel.delay_spread,
                         carrier_freq=cfg.channel.carrier_freq,
                         subcarrier_spacing=cfg.channel.subcarrier_spacing,
                         speed=speed, num_taps=cfg.channel.num_taps,
                         spatial_corr_coeff=cfg.channel.spatial_corr_coeff)
    if variant.kind == "op":
        frame = _sip_frame_for(cfg, variant)
        pattern = OpPilotPattern.for_frame(variant.pattern, frame.T)
        n_data = frame.K * (frame.T - len(pattern.pilot_symbol_indices))
        n_code = n_data * frame.Q
        code = fec.make_code(n_code // 2, seed=cfg.code_seed, max_iters=cfg.code_iters)
        return _CellJob(variant=variant, frame=frame, channel=chan, code=code,
                        corr=corr, noise=noise, base_seed=cfg.base_seed,
                        speed_kmh=speed, snr_db=snr, jcdd=None, pattern=pattern)
    frame = _sip_frame_for(cfg, variant)
    n_code = frame.W * frame.Q
    if cfg.code_alist:
        code = _alist_code(cfg.code_alist, cfg.code_iters)
        if code.n_code != n_code:
            raise ConfigurationError(
                f"alist code length {code.n_code} does not fill the grid ({n_code} bits)")
    else:
        code = fec.make_code(n_code // 2, seed=cfg.code_seed, max_iters=cfg.code_iters)
    jcdd = JcddConfig(iterations=variant.iterations,
                      estimator=variant.estimator if variant.estimator in
                      ("lmmse", "vmp", "vmp-l", "dl") else "lmmse",
                      vmp_sweeps=cfg.vmp_sweeps, vmp_dim_cap=cfg.vmp_dim_cap,
                      genie=variant.genie, dl_endpoint=cfg.dl_endpoint,
                      dl_timeout=cfg.dl_timeout)
    return _CellJob(variant=variant, frame=frame, channel=chan, code=code,
                    corr=corr, noise=noise, base_seed=cfg.base_seed,
                    speed_kmh=speed, snr_db=snr, jcdd=jcdd, pattern=None)


def _omega(job: _CellJob) -> float:
    if job.variant.kind == "op":
        return job.pattern.omega
    return 1.0


def _reduce_cell(job: _CellJob, records) -> CellResult:
    records = sorted(records, key=lambda r: r[0])
    frames = len(records)
    n_t = job.frame.N_t
    blocks = frames * n_t
    errors = int(sum(int(r[1].sum()) for r in records))
    bler = errors / blocks
    lo, hi = wilson_interval(errors, blocks)
    mse_first = float(np.mean([r[2][0] for r in records]))
    mse_last = float(np.mean([r[2][-1] for r in records]))
    omega = _omega(job)
    tput = throughput(job.frame.K, job.frame.T, omega,
                      job.code.rate, job.frame.Q, bler)
    refine_ms = float(np.mean([r[3] for r in records]))
    return CellResult(variant=job.variant.name, speed_kmh=job.speed_kmh,
                      snr_db=job.snr_db, frames=frames, blocks=blocks,
                      block_errors=errors, bler=bler, bler_lo=lo, bler_hi=hi,
                      omega=omega, throughput_bits=tput, mse_first=mse_first,
                      mse_last=mse_last, refine_wall_ms_mean=refine_ms)


def run_cell(job: _CellJob, frames: int, workers: int = 1) -> CellResult:
    t0 = time.perf_counter()
    indices = list(range(frames))
    try:
        if workers <= 1:
            records = _run_chunk(job, indices)
        else:
            chunk = max(1, math.ceil(frames / (workers * 4)))
            parts = [indices[i:i + chunk] for i in range(0, frames, chunk)]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = [r for part in pool.map(_run_chunk, [job] * len(parts), parts)
                           for r in part]
    except Exception as e:  # noqa: BLE001 - cell failures must not kill the sweep
        logger.error("cell %s @ %.1f km/h %.1f dB failed: %s",
                     job.variant.name, job.speed_kmh, job.snr_db, e)
        msg = str(e).replace(",", ";").replace("\n", " ")[:160]
        return CellResult(variant=job.variant.name, speed_kmh=job.speed_kmh,
                          snr_db=job.snr_db, frames=0, blocks=0, block_errors=0,
                          bler=0.0, bler_lo=0.0, bler_hi=0.0, omega=_omega(job),
                          throughput_bits=0.0, mse_first=0.0, mse_last=0.0,
                          status=f"failed:{msg}")
    cell = _reduce_cell(job, records)
    cell.wall_s = time.perf_counter() - t0
    return cell


def run_sweep(cfg: SweepConfig, progress=None) -> SimReport:
    """Monte-Carlo over variants x speeds x SNRs; deterministic for a fixed
    base_seed regardless of the worker count."""
    workers = _worker_count(cfg)
    report = SimReport()
    corr_cache = {}
    fixed_corr = load_correlations(cfg.corr_path) if cfg.corr_path else None
    for variant in cfg.variants:
        for speed in cfg.speeds_kmh:
            stats_speed = cfg.stats_speed_kmh if cfg.stats_speed_kmh is not None else speed
            if fixed_corr is not None:
                corr = fixed_corr
            else:
                if stats_speed not in corr_cache:
                    corr_cache[stats_speed] = correlations_for(cfg, stats_speed)
                corr = corr_cache[stats_speed]
            for snr in cfg.snr_db:
                try:
                    job = _build_job(cfg, variant, corr, speed, snr)
                except ConfigurationError as e:
                    logger.error("cell %s @ %.1f km/h %.1f dB unbuildable: %s",
                                 variant.name, speed, snr, e)
                    msg = str(e).replace(",", ";").replace("\n", " ")[:160]
                    cell = CellResult(variant=variant.name, speed_kmh=speed, snr_db=snr,
                                      frames=0, blocks=0, block_errors=0, bler=0.0,
                                      bler_lo=0.0, bler_hi=0.0, omega=0.0,
                                      throughput_bits=0.0, mse_first=0.0, mse_last=0.0,
                                      status=f"failed:{msg}")
                else:
                    cell = run_cell(job, cfg.frames_per_cell, workers)
                report.cells.append(cell)
                if progress:
                    progress(cell)
    return report


def capture_iteration_one(job: _CellJob, idx: int):
    """Run the first receiver iteration and return what a learned refined
    estimator would consume: the cancelled LS estimate, the confidence map,
    and the true channel."""
    frame, mod = job.frame, qam_spec(job.frame.mod_order)
    key = [job.base_seed, _q(job.speed_kmh), _q(job.snr_db), idx, _S_DATA]
    bits_rng = np.random.default_rng(key + [_S_BITS])
    tx_bits = bits_rng.integers(0, 2, size=(frame.N_t, job.code.n_info), dtype=np.uint8)
    coded = fec.encode(tx_bits, job.code)
    data = np.stack([modulate(coded[n], mod) for n in range(frame.N_t)])
    pilots = generate_pilots(frame)
    grid = build_sip_grid(frame, pilots, data)
    chan = generate_channel(job.channel, frame, key + [_S_CHAN])
    y = apply_channel(grid, chan, job.noise, key + [_S_NOISE])

    y_vec = grid_to_vec(y)
    ws = _Workspace()
    h1 = _initial_estimate(frame, y_vec, pilots, job.corr, job.noise, ws)
    _, post, _ = _detect_and_decode(frame, y_vec.T, pilots.p.T, h1, mod, job.code, job.noise)
    d_hat = np.empty((frame.N_t, frame.W), dtype=np.complex128)
    v_tilde = np.empty((frame.N_t, frame.W))
    g = np.empty((frame.N_t, frame.W))
    for n in range(frame.N_t):
        d_hat[n], v_tilde[n], _, g[n] = det.soft_remap(post[n].reshape(frame.W, mod.Q), mod)
    soft = det.SoftSymbolSet(d_hat=d_hat, v_tilde=v_tilde,
                             logits=np.zeros((frame.N_t, frame.W, mod.M)), g=g)
    ls_ref = _refined_ls_links(frame, y_vec, pilots, soft, h1)
    g_grid = vec_to_grid(g, frame.K, frame.T)
    return ls_ref, g_grid, chan.H


def export_dataset(cfg: SweepConfig, n_samples: int, path, speed_kmh: float,
                   snr_db: float, corr: CorrelationSet | None = None) -> None:
    """Write a SIPDS1 training file from first-iteration receiver captures."""
    variant = VariantSpec(name="sip-lmmse", kind="sip")
    if corr is None:
        stats_speed = cfg.stats_speed_kmh if cfg.stats_speed_kmh is not None else speed_kmh
        corr = correlations_for(cfg, stats_speed)
    job = _build_job(cfg, variant, corr, speed_kmh, snr_db)
    with DatasetWriter(path, cfg.frame.N_r, cfg.frame.N_t, cfg.frame.K, cfg.frame.T) as w:
        for i in range(n_samples):
            ls, g, truth = capture_iteration_one(job, i)
            w.write_record(ls.astype(np.complex64), g.astype(np.float32),
                           truth.astype(np.complex64))


def eval_estimator(dataset_path, endpoint: str | None, corr: CorrelationSet | None = None,
                   sigma_eff2: float = 0.5, despread_cfg: linear.DespreadConfig | None = None,
                   timeout: float = 30.0, sigma_w2: float = 0.0, limit: int | None = None):
    """Per-record channel MSE of an external estimator against reference
    estimators on a SIPDS1 dataset.

    Returns a dict with mean squared errors: 'endpoint' (when an endpoint is
    given), 'despread_ls', and 'lmmse' (when correlations are given).
    """
    from .receiver import call_dl_estimator

    ls, conf, truth = read_dataset(dataset_path)
    if limit is not None:
        ls, conf, truth = ls[:limit], conf[:limit], truth[:limit]
    n = ls.shape[0]
    if n == 0:
        raise ConfigurationError("dataset is empty")
    k, t = ls.shape[3], ls.shape[4]
    dcfg = despread_cfg or linear.DespreadConfig()

    errs = {"despread_ls": []}
    if endpoint:
        errs["endpoint"] = []
    if corr is not None:
        errs["lmmse"] = []
        a_freq, a_time = linear.lmmse_operators(corr, sigma_eff2)
    for i in range(n):
        h_true = truth[i].astype(np.complex128)
        ls_i = ls[i].astype(np.complex128)
        coarse = np.empty_like(ls_i)
        for m in range(ls_i.shape[0]):
            for nn in range(ls_i.shape[1]):
                coarse[m, nn] = linear.despread_upsample(
                    linear.despread(ls_i[m, nn], dcfg), k, dcfg.L1)
        errs["despread_ls"].append(float(np.mean(np.abs(coarse - h_true) ** 2)))
        if corr is not None:
            sm = np.einsum("ab,mnbt,ct->mnac", a_freq, ls_i, a_time, optimize=True)
            errs["lmmse"].append(float(np.mean(np.abs(sm - h_true) ** 2)))
        if endpoint:
            h_hat = call_dl_estimator(ls_i, conf[i].astype(np.float64), sigma_w2,
                                      endpoint, timeout=timeout)
            errs["endpoint"].append(float(np.mean(np.abs(h_hat - h_true) ** 2)))
    return {name: float(np.mean(v)) for name, v in errs.items()}
