"""Iterative receiver orchestration, OP baseline, external estimator bridge."""

import os
import sys

import numpy as np
import pytest

from sipjcdd import fec
from sipjcdd.channel import (ChannelConfig, NoiseSpec, apply_channel,
                             estimate_correlations, generate_channel)
from sipjcdd.errors import (ConfigurationError, EndpointError, EndpointTimeout,
                            EstimatorFailure, ShapeMismatchError, WireFormatError)
from sipjcdd.grid import (FrameConfig, OpPilotPattern, build_op_grid, build_sip_grid,
                          generate_pilots, modulate, qam_spec)
from sipjcdd.receiver import (JcddConfig, call_dl_estimator, run_jcdd, run_op_receiver)

STUB = f"{sys.executable} {os.path.join(os.path.dirname(__file__), 'stub_endpoint.py')}"


@pytest.fixture(scope="module")
def setup():
    frame = FrameConfig(K=12, T=8, N_t=2, N_r=2, rho=0.3, mod_order=4)
    chan = ChannelConfig(delay_spread=800e-9, carrier_freq=3.5e9,
                         subcarrier_spacing=30e3, speed=15.0)
    corr = estimate_correlations([generate_channel(chan, frame, [40, i]) for i in range(300)])
    code = fec.make_code(frame.W * frame.Q // 2, seed=2)
    return frame, chan, corr, code


def _sip_frame(setup, seed, snr_db=12.0):
    frame, chan, corr, code = setup
    rng = np.random.default_rng([seed, 1])
    mod = qam_spec(frame.mod_order)
    bits = rng.integers(0, 2, size=(frame.N_t, code.n_info), dtype=np.uint8)
    data = np.stack([modulate(fec.encode(bits[n], code), mod) for n in range(frame.N_t)])
    pilots = generate_pilots(frame)
    grid = build_sip_grid(frame, pilots, data)
    h = generate_channel(chan, frame, [seed, 2])
    noise = NoiseSpec.from_snr_db(snr_db)
    y = apply_channel(grid, h, noise, [seed, 3])
    return bits, pilots, h, noise, y, mod


class TestRunJcdd:
    def test_single_iteration_never_touches_feedback(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 0)
        res = run_jcdd(frame, y, pilots, mod, code, corr, noise,
                       JcddConfig(iterations=1), genie_H=h, tx_bits=bits)
        assert res.telemetry["soft_remap_calls"] == 0
        assert res.telemetry["refine_calls"] == 0
        assert len(res.mse_per_iter) == 1

    def test_two_iterations_runs_refinement_once(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 1)
        res = run_jcdd(frame, y, pilots, mod, code, corr, noise,
                       JcddConfig(iterations=2), genie_H=h, tx_bits=bits)
        assert res.telemetry["soft_remap_calls"] == 1
        assert res.telemetry["refine_calls"] == 1
        assert len(res.mse_per_iter) == 2
        assert len(res.telemetry["refine_wall_ms"]) == 1

    def test_noiseless_genie_zero_block_errors(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, _, _, mod = _sip_frame(setup, 2)
        noise = NoiseSpec(sigma_w2=0.0, snr_db=np.inf)
        data = np.stack([modulate(fec.encode(bits[n], code), mod) for n in range(frame.N_t)])
        grid = build_sip_grid(frame, pilots, data)
        y = apply_channel(grid, h, noise, [2, 3])
        res = run_jcdd(frame, y, pilots, mod, code, corr, noise,
                       JcddConfig(iterations=1, genie=True), genie_H=h, tx_bits=bits)
        assert not res.block_error.any()
        assert res.mse_per_iter == [0.0]

    def test_deterministic(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 3)
        cfg = JcddConfig(iterations=2)
        a = run_jcdd(frame, y, pilots, mod, code, corr, noise, cfg, genie_H=h, tx_bits=bits)
        b = run_jcdd(frame, y, pilots, mod, code, corr, noise, cfg, genie_H=h, tx_bits=bits)
        np.testing.assert_array_equal(a.decoded, b.decoded)
        assert a.mse_per_iter == b.mse_per_iter

    def test_refinement_improves_channel_mse_on_average(self, setup):
        frame, chan, corr, code = setup
        first, last = [], []
        for seed in range(30):
            bits, pilots, h, noise, y, mod = _sip_frame(setup, 100 + seed, snr_db=14.0)
            res = run_jcdd(frame, y, pilots, mod, code, corr, noise,
                           JcddConfig(iterations=2), genie_H=h, tx_bits=bits)
            first.append(res.mse_per_iter[0])
            last.append(res.mse_per_iter[-1])
        assert np.mean(last) < np.mean(first)

    @pytest.mark.parametrize("estimator", ["vmp", "vmp-l"])
    def test_variational_variants_run(self, setup, estimator):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 4)
        res = run_jcdd(frame, y, pilots, mod, code, corr, noise,
                       JcddConfig(iterations=2, estimator=estimator), genie_H=h, tx_bits=bits)
        assert len(res.mse_per_iter) == 2
        assert np.isfinite(res.mse_per_iter[1])

    def test_genie_without_channel_rejected(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 5)
        with pytest.raises(ConfigurationError):
            run_jcdd(frame, y, pilots, mod, code, corr, noise,
                     JcddConfig(iterations=1, genie=True))

    def test_dl_variant_requires_endpoint(self):
        with pytest.raises(ConfigurationError):
            JcddConfig(iterations=2, estimator="dl")

    def test_dl_variant_with_echo_stub(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 6)
        res = run_jcdd(frame, y, pilots, mod, code, corr, noise,
                       JcddConfig(iterations=2, estimator="dl", dl_endpoint=STUB),
                       genie_H=h, tx_bits=bits)
        assert len(res.mse_per_iter) == 2

    def test_estimator_failure_reports_iteration(self, setup):
        frame, chan, corr, code = setup
        bits, pilots, h, noise, y, mod = _sip_frame(setup, 7)
        cfg = JcddConfig(iterations=2, estimator="dl", dl_endpoint=STUB + " --mode crash")
        with pytest.raises(EstimatorFailure, match="iteration 2"):
            run_jcdd(frame, y, pilots, mod, code, corr, noise, cfg,
                     genie_H=h, tx_bits=bits)


class TestOpReceiver:
    def _op_frame(self, setup, seed, pattern_name="1P", snr_db=20.0, speed=0.0):
        frame, _, corr, _ = setup
        chan = ChannelConfig(delay_spread=800e-9, carrier_freq=3.5e9,
                             subcarrier_spacing=30e3, speed=speed)
        pattern = OpPilotPattern.for_frame(pattern_name, frame.T)
        n_data = frame.K * (frame.T - len(pattern.pilot_symbol_indices))
        code = fec.make_code(n_data * frame.Q // 2, seed=3)
        rng = np.random.default_rng([seed, 7])
        mod = qam_spec(frame.mod_order)
        bits = rng.integers(0, 2, size=(frame.N_t, code.n_info), dtype=np.uint8)
        data = np.stack([modulate(fec.encode(bits[n], code), mod) for n in range(frame.N_t)])
        grid = build_op_grid(frame, pattern, data)
        h = generate_channel(chan, frame, [seed, 8])
        noise = NoiseSpec.from_snr_db(snr_db)
        y = apply_channel(grid, h, noise, [seed, 9])
        return frame, pattern, code, corr, bits, h, noise, y, mod

    def test_llr_stream_length_matches_data_res(self, setup):
        frame, pattern, code, corr, bits, h, noise, y, mod = self._op_frame(setup, 0)
        assert code.n_code == int(round(pattern.omega * frame.W)) * frame.Q
        res = run_op_receiver(frame, y, pattern, corr, noise, mod, code,
                              tx_bits=bits, genie_H=h)
        assert res.decoded.shape == (frame.N_t, code.n_info)

    def test_static_high_snr_decodes(self, setup):
        errors = 0
        for seed in range(20):
            frame, pattern, code, corr, bits, h, noise, y, mod = self._op_frame(setup, seed)
            res = run_op_receiver(frame, y, pattern, corr, noise, mod, code, tx_bits=bits)
            errors += int(res.block_error.sum())
        assert errors == 0

    @pytest.mark.slow
    def test_more_pilot_symbols_help_at_high_speed(self):
        # T=14 frame at 324 km/h: two pilot symbols cannot track the
        # channel's time variation, four can
        frame = FrameConfig(K=12, T=14, N_t=2, N_r=2, rho=0.3, mod_order=4)
        chan = ChannelConfig(delay_spread=800e-9, carrier_freq=3.5e9,
                             subcarrier_spacing=30e3, speed=324.0)
        corr = estimate_correlations(
            [generate_channel(chan, frame, [70, i]) for i in range(400)])
        mod = qam_spec(frame.mod_order)
        noise = NoiseSpec.from_snr_db(15.0)
        bler = {}
        for name in ("2P", "4P"):
            pattern = OpPilotPattern.for_frame(name, frame.T)
            n_data = frame.K * (frame.T - len(pattern.pilot_symbol_indices))
            code = fec.make_code(n_data * frame.Q // 2, seed=3)
            errs = blocks = 0
            for seed in range(400):
                rng = np.random.default_rng([seed, 7])
                bits = rng.integers(0, 2, size=(frame.N_t, code.n_info), dtype=np.uint8)
                data = np.stack([modulate(fec.encode(bits[n], code), mod)
                                 for n in range(frame.N_t)])
                grid = build_op_grid(frame, pattern, data)
                h = generate_channel(chan, frame, [seed, 8])
                y = apply_channel(grid, h, noise, [seed, 9])
                res = run_op_receiver(frame, y, pattern, corr, noise, mod, code, tx_bits=bits)
                errs += int(res.block_error.sum())
                blocks += frame.N_t
            bler[name] = errs / blocks
        assert bler["4P"] <= bler["2P"]


class TestDlEndpointBridge:
    def _inputs(self, seed=0, k=6, t=4):
        rng = np.random.default_rng(seed)
        ls = rng.standard_normal((2, 2, k, t)) + 1j * rng.standard_normal((2, 2, k, t))
        g = rng.random((2, k, t))
        return ls, g

    def test_echo_roundtrip(self):
        ls, g = self._inputs()
        out = call_dl_estimator(ls, g, 0.1, STUB)
        np.testing.assert_allclose(out, ls, atol=1e-6)

    def test_wrong_shape_response(self):
        ls, g = self._inputs()
        with pytest.raises(ShapeMismatchError):
            call_dl_estimator(ls, g, 0.1, STUB + " --mode wrong-shape")

    def test_bad_magic_response(self):
        ls, g = self._inputs()
        with pytest.raises(WireFormatError):
            call_dl_estimator(ls, g, 0.1, STUB + " --mode bad-magic")

    def test_timeout(self):
        ls, g = self._inputs()
        with pytest.raises(EndpointTimeout):
            call_dl_estimator(ls, g, 0.1, STUB + " --mode sleep", timeout=0.7)

    def test_nonzero_exit(self):
        ls, g = self._inputs()
        with pytest.raises(EndpointError, match="synthetic failure"):
            call_dl_estimator(ls, g, 0.1, STUB + " --mode crash")

    def test_missing_endpoint(self):
        ls, g = self._inputs()
        with pytest.raises(ConfigurationError):
            call_dl_estimator(ls, g, 0.1, "")
