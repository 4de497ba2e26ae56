"""Resource-grid construction: pilots, QAM mapping, superposition, OP layout."""

import numpy as np
import pytest

from sipjcdd.errors import ConfigurationError
from sipjcdd.grid import (FrameConfig, OpPilotPattern, build_op_grid, build_sip_grid,
                          generate_pilots, grid_to_vec, hard_demap, modulate,
                          op_masks, op_pilot_values, qam_spec, superimpose, vec_to_grid)


def _frame(K=4, T=2, n_t=2, n_r=2, rho=0.3, m=4):
    return FrameConfig(K=K, T=T, N_t=n_t, N_r=n_r, rho=rho, mod_order=m)


class TestFrameConfig:
    def test_derived_quantities(self):
        cfg = _frame(K=12, T=14, m=16)
        assert cfg.W == 168
        assert cfg.Q == 4

    @pytest.mark.parametrize("kw", [
        dict(K=0), dict(T=0), dict(n_t=0), dict(n_r=0),
        dict(rho=-0.1), dict(rho=1.5), dict(m=12),
    ])
    def test_rejects_bad_config(self, kw):
        with pytest.raises(ConfigurationError):
            _frame(**kw)


class TestPilots:
    def test_dft_columns_w4(self):
        # direct DFT column evaluation: columns 0 and 2 of the 4-point DFT
        p = generate_pilots(_frame(K=2, T=2)).p
        w = np.arange(4)
        expected0 = np.exp(-2j * np.pi * w * 0 / 4)
        expected1 = np.exp(-2j * np.pi * w * 2 / 4)
        np.testing.assert_allclose(p[0], expected0, atol=1e-12)
        np.testing.assert_allclose(p[1], expected1, atol=1e-12)
        np.testing.assert_allclose(p[1], [1, -1, 1, -1], atol=1e-12)

    def test_unit_modulus(self):
        p = generate_pilots(_frame(K=6, T=7, n_t=4)).p
        np.testing.assert_allclose(np.abs(p), 1.0, atol=1e-12)

    def test_mutual_orthogonality(self):
        cfg = _frame(K=6, T=7, n_t=4)
        p = generate_pilots(cfg).p
        gram = p.conj() @ p.T
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) <= 1e-9 * cfg.W

    def test_too_many_antennas(self):
        with pytest.raises(ConfigurationError):
            generate_pilots(_frame(K=1, T=2, n_t=3))


class TestModulation:
    def test_qpsk_gray_anchor(self):
        spec = qam_spec(4)
        sym = modulate(np.array([0, 0]), spec)
        np.testing.assert_allclose(sym, [(1 + 1j) / np.sqrt(2)], atol=1e-12)

    def test_16qam_all_patterns_distinct_unit_power(self):
        # enumerate the constellation through the mapper
        spec = qam_spec(16)
        bits = np.array([[(i >> (3 - b)) & 1 for b in range(4)] for i in range(16)])
        pts = modulate(bits.reshape(-1), spec)
        assert len(set(np.round(pts, 9))) == 16
        np.testing.assert_allclose(np.mean(np.abs(pts) ** 2), 1.0, atol=1e-12)

    def test_empty_input(self):
        assert modulate(np.array([], dtype=int), qam_spec(16)).size == 0

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            modulate(np.array([0, 1, 0]), qam_spec(16))

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_roundtrip_all_patterns(self, m):
        spec = qam_spec(m)
        q = spec.Q
        bits = np.array([[(i >> (q - 1 - b)) & 1 for b in range(q)]
                         for i in range(m)]).reshape(-1)
        assert np.array_equal(hard_demap(modulate(bits, spec), spec), bits)

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_gray_subsets_balanced(self, m):
        spec = qam_spec(m)
        for q in range(spec.Q):
            assert spec.bit_subset(q, 0).size == m // 2
            assert spec.bit_subset(q, 1).size == m // 2

    def test_gray_adjacency(self):
        # nearest horizontal/vertical neighbors differ in exactly one bit
        spec = qam_spec(16)
        pts = spec.constellation
        step = np.min(np.abs(pts[:, None] - pts[None, :])[np.abs(pts[:, None] - pts[None, :]) > 1e-9])
        for i in range(16):
            for j in range(16):
                if abs(abs(pts[i] - pts[j]) - step) < 1e-9:
                    assert np.sum(spec.bit_labels[i] != spec.bit_labels[j]) == 1


class TestSuperimpose:
    def test_rho_extremes(self):
        p = np.array([1.0, 1j])
        d = np.array([-1.0, 1.0])
        np.testing.assert_array_equal(superimpose(p, d, 0.0), d)
        np.testing.assert_array_equal(superimpose(p, d, 1.0), p)

    def test_direct_evaluation(self):
        p = np.array([1.0, 1j])
        d = np.array([-1.0, 1.0])
        s = superimpose(p, d, 0.3)
        expected = np.array([np.sqrt(0.3) - np.sqrt(0.7), np.sqrt(0.3) * 1j + np.sqrt(0.7)])
        np.testing.assert_allclose(s, expected, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            superimpose(np.ones(3), np.ones(4), 0.3)


class TestSipGrid:
    def test_average_power_near_unity(self):
        cfg = _frame(K=100, T=100, m=16)
        rng = np.random.default_rng(0)
        pilots = generate_pilots(cfg)
        spec = qam_spec(16)
        bits = rng.integers(0, 2, size=cfg.N_t * cfg.W * 4)
        data = modulate(bits, spec).reshape(cfg.N_t, cfg.W)
        grid = build_sip_grid(cfg, pilots, data)
        power = np.mean(np.abs(grid.cells) ** 2, axis=(1, 2))
        assert np.all(power > 0.95) and np.all(power < 1.05)

    def test_vec_grid_roundtrip(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(24) + 1j * rng.standard_normal(24)
        g = vec_to_grid(v, 4, 6)
        assert g.shape == (4, 6)
        # frequency-first: w = t*K + k
        assert g[1, 2] == v[2 * 4 + 1]
        np.testing.assert_array_equal(grid_to_vec(g), v)


class TestOpPattern:
    def test_omega_values_t14(self):
        assert OpPilotPattern.for_frame("1P", 14).omega == 13 / 14
        assert OpPilotPattern.for_frame("2P", 14).omega == 12 / 14
        assert OpPilotPattern.for_frame("4P", 14).omega == 10 / 14

    def test_symbol_indices_t14(self):
        assert OpPilotPattern.for_frame("1P", 14).pilot_symbol_indices == (2,)
        assert OpPilotPattern.for_frame("2P", 14).pilot_symbol_indices == (2, 11)
        assert OpPilotPattern.for_frame("4P", 14).pilot_symbol_indices == (2, 5, 8, 11)

    def test_comb_disjoint(self):
        cfg = _frame(K=4, T=14, n_t=2, m=4)
        pat = OpPilotPattern.for_frame("1P", 14)
        vals = op_pilot_values(cfg, pat)
        occupied0 = np.abs(vals[0, :, 2]) > 0
        occupied1 = np.abs(vals[1, :, 2]) > 0
        np.testing.assert_array_equal(np.where(occupied0)[0], [0, 2])
        np.testing.assert_array_equal(np.where(occupied1)[0], [1, 3])
        assert not np.any(occupied0 & occupied1)

    def test_k_not_divisible(self):
        cfg = _frame(K=5, T=14, n_t=2, m=4)
        with pytest.raises(ConfigurationError):
            op_pilot_values(cfg, OpPilotPattern.for_frame("1P", 14))


class TestOpGrid:
    def test_data_re_count_and_placement(self):
        cfg = _frame(K=4, T=14, n_t=2, m=4)
        pat = OpPilotPattern.for_frame("4P", 14)
        n_data = int(round(pat.omega * cfg.W))
        assert n_data == 4 * 10
        rng = np.random.default_rng(2)
        data = (rng.standard_normal((2, n_data)) + 1j * rng.standard_normal((2, n_data)))
        grid = build_op_grid(cfg, pat, data)
        _, data_mask = op_masks(cfg, pat)
        # pilot symbols hold only pilots, data symbols only data
        for t in pat.pilot_symbol_indices:
            assert not np.any(data_mask[:, t])
        placed = grid.cells[:, data_mask]
        assert placed.shape == (2, n_data)

    def test_pilot_res_never_overlap(self):
        cfg = _frame(K=8, T=14, n_t=4, m=4)
        pat = OpPilotPattern.for_frame("2P", 14)
        vals = op_pilot_values(cfg, pat)
        occupancy = (np.abs(vals) > 0).sum(axis=0)
        assert occupancy.max() <= 1

    def test_wrong_data_length(self):
        cfg = _frame(K=4, T=14, n_t=2, m=4)
        pat = OpPilotPattern.for_frame("1P", 14)
        with pytest.raises(ConfigurationError):
            build_op_grid(cfg, pat, np.zeros((2, 3), dtype=complex))
