"""Resource-grid construction: DFT pilots, Gray-mapped QAM, superimposed-pilot
frames, and orthogonal-pilot (comb) frame layouts.

Vector index convention: a length-W sequence maps onto the K x T grid
frequency-first, i.e. w = t*K + k, so ``vec.reshape(T, K).T`` is the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "FrameConfig",
    "PilotSet",
    "ModulationSpec",
    "ResourceGrid",
    "OpPilotPattern",
    "generate_pilots",
    "modulate",
    "hard_demap",
    "superimpose",
    "build_sip_grid",
    "build_op_grid",
    "op_pilot_values",
    "op_masks",
    "vec_to_grid",
    "grid_to_vec",
]


@dataclass(frozen=True)
class FrameConfig:
    """Static geometry of one MIMO-OFDM frame."""

    K: int               # subcarriers
    T: int               # OFDM symbols
    N_t: int             # transmit antennas
    N_r: int             # receive antennas
    rho: float           # pilot power fraction
    mod_order: int       # constellation size M

    def __post_init__(self):
        if self.K < 1 or self.T < 1:
            raise ConfigurationError(f"K and T must be positive, got K={self.K}, T={self.T}")
        if self.N_t < 1 or self.N_r < 1:
            raise ConfigurationError(f"antenna counts must be >= 1, got N_t={self.N_t}, N_r={self.N_r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"rho must lie in [0, 1], got {self.rho}")
        q = int(round(np.log2(self.mod_order)))
        if 2 ** q != self.mod_order:
            raise ConfigurationError(f"mod_order must be a power of two, got {self.mod_order}")

    @property
    def W(self) -> int:
        return self.K * self.T

    @property
    def Q(self) -> int:
        return int(round(np.log2(self.mod_order)))


@dataclass(frozen=True)
class PilotSet:
    """Unit-modulus, mutually orthogonal pilot sequences, one per tx antenna.

    ``p`` has shape (N_t, W); row n is the pilot of antenna n.
    """

    p: np.ndarray

    @property
    def n_t(self) -> int:
        return self.p.shape[0]

    @property
    def w(self) -> int:
        return self.p.shape[1]


def generate_pilots(cfg: FrameConfig) -> PilotSet:
    """DFT-column pilots: antenna n gets column n*floor(W/N_t) of the W-point
    DFT matrix, giving maximal cyclic-shift separation between antennas."""
    w_len = cfg.W
    if cfg.N_t > w_len:
        raise ConfigurationError(f"cannot assign {cfg.N_t} orthogonal pilots with W={w_len}")
    stride = w_len // cfg.N_t
    idx = np.arange(w_len)
    cols = np.arange(cfg.N_t) * stride
    p = np.exp(-2j * np.pi * np.outer(cols, idx) / w_len)
    return PilotSet(p=p)


# Per-axis Gray labeling: bit 0 selects the sign (0 -> positive), remaining
# bits select the magnitude so that adjacent amplitude levels differ in one bit.
_AXIS_LEVELS = {
    1: {(0,): 1, (1,): -1},
    2: {(0, 0): 1, (0, 1): 3, (1, 0): -1, (1, 1): -3},
    3: {(0, 0, 0): 1, (0, 0, 1): 3, (0, 1, 1): 5, (0, 1, 0): 7,
        (1, 0, 0): -1, (1, 0, 1): -3, (1, 1, 1): -5, (1, 1, 0): -7},
}


@dataclass(frozen=True)
class ModulationSpec:
    """Gray-mapped square QAM with unit average power.

    ``constellation[i]`` is the point labeled by ``bit_labels[i]``; the first
    Q/2 bits address the in-phase axis, the rest the quadrature axis.
    """

    M: int
    constellation: np.ndarray   # (M,) complex, unit mean power
    bit_labels: np.ndarray      # (M, Q) uint8

    @property
    def Q(self) -> int:
        return self.bit_labels.shape[1]

    def bit_subset(self, q: int, value: int) -> np.ndarray:
        """Constellation points whose q-th bit equals ``value``."""
        mask = self.bit_labels[:, q] == value
        return self.constellation[mask]

    def symbol_index(self, bits: np.ndarray) -> np.ndarray:
        """Map rows of bits (n, Q) to constellation indices."""
        weights = 1 << np.arange(self.Q - 1, -1, -1)
        return bits.astype(np.int64) @ weights


@lru_cache(maxsize=8)
def _qam_spec(m_order: int) -> ModulationSpec:
    q = int(round(np.log2(m_order)))
    if 2 ** q != m_order or q < 1 or (q > 1 and q % 2 != 0) or q > 6:
        raise ConfigurationError(f"unsupported constellation size {m_order}")
    if q == 1:
        # BPSK kept for completeness
        labels = np.array([[0], [1]], dtype=np.uint8)
        const = np.array([1.0, -1.0], dtype=np.complex128)
        return ModulationSpec(M=2, constellation=const, bit_labels=labels)
    half = q // 2
    axis = _AXIS_LEVELS[half]
    labels = np.zeros((m_order, q), dtype=np.uint8)
    const = np.zeros(m_order, dtype=np.complex128)
    for i in range(m_order):
        bits = [(i >> (q - 1 - b)) & 1 for b in range(q)]
        labels[i] = bits
        re = axis[tuple(bits[:half])]
        im = axis[tuple(bits[half:])]
        const[i] = re + 1j * im
    const = const / np.sqrt(np.mean(np.abs(const) ** 2))
    return ModulationSpec(M=m_order, constellation=const, bit_labels=labels)


def qam_spec(m_order: int) -> ModulationSpec:
    """Shared ModulationSpec for the given constellation size."""
    return _qam_spec(int(m_order))


def modulate(bits: np.ndarray, spec: ModulationSpec) -> np.ndarray:
    """Gray-map a bit vector onto constellation symbols (Q bits per symbol)."""
    bits = np.asarray(bits)
    if bits.size % spec.Q != 0:
        raise ConfigurationError(f"bit count {bits.size} not divisible by Q={spec.Q}")
    if bits.size == 0:
        return np.zeros(0, dtype=np.complex128)
    idx = spec.symbol_index(bits.reshape(-1, spec.Q))
    return spec.constellation[idx]


def hard_demap(symbols: np.ndarray, spec: ModulationSpec) -> np.ndarray:
    """Nearest-point hard slicer, returning the Gray bit labels."""
    symbols = np.asarray(symbols).ravel()
    d2 = np.abs(symbols[:, None] - spec.constellation[None, :]) ** 2
    idx = np.argmin(d2, axis=1)
    return spec.bit_labels[idx].reshape(-1)


def superimpose(p: np.ndarray, d: np.ndarray, rho: float) -> np.ndarray:
    """Power-domain superposition s = sqrt(rho)*p + sqrt(1-rho)*d."""
    p = np.asarray(p)
    d = np.asarray(d)
    if p.shape != d.shape:
        raise ConfigurationError(f"pilot/data shape mismatch: {p.shape} vs {d.shape}")
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1], got {rho}")
    return np.sqrt(rho) * p + np.sqrt(1.0 - rho) * d


def vec_to_grid(vec: np.ndarray, K: int, T: int) -> np.ndarray:
    """Reshape a length-W frequency-first sequence to a (K, T) grid."""
    vec = np.asarray(vec)
    if vec.shape[-1] != K * T:
        raise ConfigurationError(f"vector length {vec.shape[-1]} != K*T = {K * T}")
    return np.swapaxes(vec.reshape(vec.shape[:-1] + (T, K)), -1, -2)


def grid_to_vec(grid: np.ndarray) -> np.ndarray:
    """Inverse of vec_to_grid: (..., K, T) -> (..., W), frequency-first."""
    g = np.swapaxes(np.asarray(grid), -1, -2)
    return g.reshape(g.shape[:-2] + (-1,))


@dataclass(frozen=True)
class ResourceGrid:
    """Transmitted symbols per antenna, cells shape (N_t, K, T)."""

    cells: np.ndarray
    kind: str  # "SIP" | "OP"


def build_sip_grid(cfg: FrameConfig, pilots: PilotSet, data: np.ndarray) -> ResourceGrid:
    """Superimpose per-antenna data (N_t, W) on pilots over the full grid."""
    data = np.asarray(data)
    if data.shape != (cfg.N_t, cfg.W):
        raise ConfigurationError(f"data shape {data.shape} != ({cfg.N_t}, {cfg.W})")
    s = superimpose(pilots.p, data, cfg.rho)
    return ResourceGrid(cells=vec_to_grid(s, cfg.K, cfg.T), kind="SIP")


@dataclass(frozen=True)
class OpPilotPattern:
    """Orthogonal-pilot layout: dedicated pilot OFDM symbols, comb-multiplexed
    across antennas in frequency."""

    name: str
    pilot_symbol_indices: tuple
    T: int

    @property
    def omega(self) -> float:
        """Fraction of REs carrying data."""
        return (self.T - len(self.pilot_symbol_indices)) / self.T

    @classmethod
    def for_frame(cls, name: str, T: int) -> "OpPilotPattern":
        """Named patterns: 1P/2P/4P pilot symbols spread over [2, T-3].

        For T=14 this yields {2}, {2,11}, and {2,5,8,11}.
        """
        counts = {"1P": 1, "2P": 2, "4P": 4}
        if name not in counts:
            raise ConfigurationError(f"unknown pilot pattern {name!r}")
        n_p = counts[name]
        if T < n_p + 4:
            raise ConfigurationError(f"frame too short for pattern {name}: T={T}")
        if n_p == 1:
            idx = (2,)
        else:
            idx = tuple(int(round(v)) for v in np.linspace(2, T - 3, n_p))
        if len(set(idx)) != n_p:
            raise ConfigurationError(f"pattern {name} collapses at T={T}")
        return cls(name=name, pilot_symbol_indices=idx, T=T)


def op_pilot_values(cfg: FrameConfig, pattern: OpPilotPattern) -> np.ndarray:
    """Deterministic unit-modulus pilot cells for the OP layout.

    Returns (N_t, K, T); antenna n transmits on subcarriers k with
    k mod N_t == n during pilot symbols and is zero elsewhere.
    """
    if cfg.K % cfg.N_t != 0:
        raise ConfigurationError(f"K={cfg.K} not divisible by N_t={cfg.N_t}")
    if pattern.T != cfg.T:
        raise ConfigurationError(f"pattern built for T={pattern.T}, frame has T={cfg.T}")
    rng = np.random.default_rng(0x51C0)
    qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=(cfg.N_t, cfg.K, cfg.T))))
    cells = np.zeros((cfg.N_t, cfg.K, cfg.T), dtype=np.complex128)
    for n in range(cfg.N_t):
        comb = np.arange(n, cfg.K, cfg.N_t)
        for t in pattern.pilot_symbol_indices:
            cells[n, comb, t] = qpsk[n, comb, t]
    return cells


def op_masks(cfg: FrameConfig, pattern: OpPilotPattern):
    """(pilot_symbol mask over T, data mask over (K, T)) for the OP layout."""
    pilot_t = np.zeros(cfg.T, dtype=bool)
    pilot_t[list(pattern.pilot_symbol_indices)] = True
    data_mask = np.ones((cfg.K, cfg.T), dtype=bool)
    data_mask[:, pilot_t] = False
    return pilot_t, data_mask


def build_op_grid(cfg: FrameConfig, pattern: OpPilotPattern, data: np.ndarray) -> ResourceGrid:
    """Place full-power comb pilots on pilot symbols and data everywhere else.

    ``data`` has shape (N_t, n_data) with n_data = K*(T - #pilot symbols);
    symbols fill data REs frequency-first in increasing OFDM-symbol order.
    """
    data = np.asarray(data)
    pilot_t, data_mask = op_masks(cfg, pattern)
    n_data = cfg.K * int((~pilot_t).sum())
    if data.shape != (cfg.N_t, n_data):
        raise ConfigurationError(f"data shape {data.shape} != ({cfg.N_t}, {n_data})")
    cells = op_pilot_values(cfg, pattern)
    data_syms = np.where(~pilot_t)[0]
    pos = 0
    for t in data_syms:
        cells[:, :, t] = data[:, pos:pos + cfg.K]
        pos += cfg.K
    return ResourceGrid(cells=cells, kind="OP")
