"""Rate-1/2 (3,6)-regular LDPC coding: progressive-edge-growth construction,
systematic encoding over GF(2), and a normalized min-sum decoder.

LLR sign convention throughout the package: positive means bit 0 is more
likely. Posterior magnitudes are clamped to LLR_CLAMP so downstream softmax
remapping stays in exp range.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

LLR_CLAMP = 30.0
MIN_SUM_SCALE = 0.75

__all__ = ["CodeConfig", "make_code", "encode", "decode", "decode_batch",
           "save_alist", "load_alist", "LLR_CLAMP"]


@dataclass
class CodeConfig:
    """One LDPC code instance plus precomputed encoder/decoder tables."""

    n_info: int
    n_code: int
    max_iters: int
    seed: int
    var_edges: np.ndarray       # (n_code, 3) edge ids in check-major order
    chk_edges: np.ndarray       # (n_chk, dc_max) edge ids, -1 padded
    edge_var: np.ndarray        # (E,) variable index of each edge
    parity_gen: np.ndarray      # (n_chk, n_info) uint8: parity = parity_gen @ u mod 2

    @property
    def rate(self) -> float:
        return self.n_info / self.n_code

    @property
    def n_chk(self) -> int:
        return self.n_code - self.n_info

    def parity_check_dense(self) -> np.ndarray:
        """Materialize H as a dense uint8 matrix (tests, alist export)."""
        h = np.zeros((self.n_chk, self.n_code), dtype=np.uint8)
        edge_chk = np.repeat(np.arange(self.n_chk), (self.chk_edges >= 0).sum(axis=1))
        h[edge_chk, self.edge_var] = 1
        return h


def _peg_graph(n_code: int, n_chk: int, dv: int, rng: np.random.Generator):
    """Progressive edge growth: per variable, connect each new edge to the
    check that is unreachable (or farthest) in the current graph, preferring
    low degree. Returns per-variable check lists."""
    var_chk = [[] for _ in range(n_code)]
    chk_var = [[] for _ in range(n_chk)]
    chk_deg = np.zeros(n_chk, dtype=np.int32)

    for v in range(n_code):
        for _ in range(dv):
            if not var_chk[v]:
                cand = np.arange(n_chk)
            else:
                # BFS over the bipartite graph rooted at v
                seen_chk = np.zeros(n_chk, dtype=bool)
                seen_var = np.zeros(n_code, dtype=bool)
                seen_var[v] = True
                frontier = [v]
                last_level = []
                while frontier:
                    level = set()
                    for fv in frontier:
                        for c in var_chk[fv]:
                            if not seen_chk[c]:
                                level.add(c)
                    if not level:
                        break
                    level = sorted(level)
                    seen_chk[level] = True
                    last_level = level
                    nxt = set()
                    for c in level:
                        for nv in chk_var[c]:
                            if not seen_var[nv]:
                                nxt.add(nv)
                    seen_var[list(nxt)] = True
                    frontier = sorted(nxt)
                unreached = np.where(~seen_chk)[0]
                cand = unreached if unreached.size else np.asarray(last_level)
                cand = cand[~np.isin(cand, var_chk[v])]
                if cand.size == 0:
                    cand = np.setdiff1d(np.arange(n_chk), var_chk[v])
            d = chk_deg[cand]
            cand = cand[d == d.min()]
            c = int(rng.choice(cand))
            var_chk[v].append(c)
            chk_var[c].append(v)
            chk_deg[c] += 1
    return var_chk, chk_var, chk_deg


def _gf2_systemize(h: np.ndarray):
    """Full GF(2) row reduction on bit-packed rows.

    Returns (rank, pivot_cols, rref) where rref is the unpacked reduced matrix.
    """
    m, n = h.shape
    hb = np.packbits(h, axis=1)
    pivots = []
    r = 0
    for c in range(n):
        byte, bit = divmod(c, 8)
        mask = np.uint8(128 >> bit)
        col = hb[r:, byte] & mask
        nz = np.nonzero(col)[0]
        if nz.size == 0:
            continue
        if nz[0] != 0:
            hb[[r, r + nz[0]]] = hb[[r + nz[0], r]]
        rows = np.nonzero(hb[:, byte] & mask)[0]
        rows = rows[rows != r]
        if rows.size:
            hb[rows] ^= hb[r]
        pivots.append(c)
        r += 1
        if r == m:
            break
    rref = np.unpackbits(hb, axis=1)[:, :n]
    return r, np.asarray(pivots, dtype=np.int64), rref


def _build(n_info: int, seed: int, max_iters: int) -> CodeConfig:
    n_code = 2 * n_info
    n_chk = n_code - n_info
    dv = 3
    for attempt in range(16):
        rng = np.random.default_rng([seed, attempt, 0x1D9C])
        var_chk, chk_var, chk_deg = _peg_graph(n_code, n_chk, dv, rng)
        h = np.zeros((n_chk, n_code), dtype=np.uint8)
        for v, checks in enumerate(var_chk):
            h[checks, v] = 1
        rank, pivots, rref = _gf2_systemize(h.copy())
        if rank == n_chk:
            break
        logger.debug("parity matrix rank-deficient (%d < %d), retrying", rank, n_chk)
    else:
        raise ConfigurationError(f"failed to build full-rank LDPC for n_info={n_info}")

    # Permute columns so information bits occupy a systematic prefix.
    info_cols = np.setdiff1d(np.arange(n_code), pivots)
    perm = np.concatenate([info_cols, pivots])
    h = h[:, perm]
    parity_gen = rref[:, info_cols].astype(np.uint8)

    # Decoder tables, check-major edge enumeration.
    var_of = [[] for _ in range(n_code)]
    chk_rows = []
    e = 0
    for c in range(n_chk):
        row = np.nonzero(h[c])[0]
        ids = []
        for v in row:
            var_of[v].append(e)
            ids.append(e)
            e += 1
        chk_rows.append(ids)
    dc_max = max(len(r) for r in chk_rows)
    chk_edges = np.full((n_chk, dc_max), -1, dtype=np.int64)
    for c, ids in enumerate(chk_rows):
        chk_edges[c, :len(ids)] = ids
    var_edges = np.asarray(var_of, dtype=np.int64)  # exact degree dv everywhere
    edge_var = np.zeros(e, dtype=np.int64)
    for c in range(n_chk):
        row = np.nonzero(h[c])[0]
        edge_var[chk_edges[c, :len(row)]] = row

    return CodeConfig(n_info=n_info, n_code=n_code, max_iters=max_iters, seed=seed,
                      var_edges=var_edges, chk_edges=chk_edges, edge_var=edge_var,
                      parity_gen=parity_gen)


@lru_cache(maxsize=32)
def _cached_code(n_info: int, seed: int, max_iters: int) -> CodeConfig:
    return _build(n_info, seed, max_iters)


def make_code(n_info: int, rate: float = 0.5, seed: int = 1, max_iters: int = 25) -> CodeConfig:
    """Build (or fetch a cached) rate-1/2 (3,6)-regular code."""
    if abs(rate - 0.5) > 1e-12:
        raise ConfigurationError(f"only rate 1/2 is supported, got {rate}")
    if n_info < 8 or n_info % 2:
        raise ConfigurationError(f"n_info must be even and >= 8, got {n_info}")
    return _cached_code(int(n_info), int(seed), int(max_iters))


def encode(bits: np.ndarray, cfg: CodeConfig) -> np.ndarray:
    """Systematic encoding: codeword = [info bits, parity bits]."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != cfg.n_info:
        raise ConfigurationError(f"expected {cfg.n_info} info bits, got {bits.shape[-1]}")
    parity = (bits @ cfg.parity_gen.T) % 2
    return np.concatenate([bits, parity.astype(np.uint8)], axis=-1)


def decode_batch(llr: np.ndarray, cfg: CodeConfig, max_iters: int | None = None):
    """Normalized min-sum over a batch of LLR rows (B, n_code).

    Returns (info_bits (B, n_info), posterior (B, n_code), converged (B,)).
    Early exit happens once every row's hard decision satisfies all checks;
    rows containing an exactly-zero posterior are never declared converged.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim != 2 or llr.shape[1] != cfg.n_code:
        raise ConfigurationError(f"LLR batch must be (B, {cfg.n_code}), got {llr.shape}")
    iters = cfg.max_iters if max_iters is None else max_iters
    llr = np.clip(llr, -LLR_CLAMP, LLR_CLAMP)
    b = llr.shape[0]

    pad = cfg.chk_edges < 0
    chk_gather = np.where(pad, 0, cfg.chk_edges)
    v2c = llr[:, cfg.edge_var].copy()
    c2v_flat = np.zeros_like(v2c)
    total = llr.copy()

    def _row_state(tot):
        bits = tot < 0
        par = bits[:, cfg.edge_var][:, chk_gather]
        par[:, pad] = False
        ok = ~np.any(par.sum(axis=2) % 2, axis=1)
        decided = ~np.any(tot == 0.0, axis=1)
        return bits, ok & decided

    bits, converged = _row_state(total)
    if converged.all():
        return bits[:, :cfg.n_info].astype(np.uint8), total, converged

    for _ in range(iters):
        vals = v2c[:, chk_gather]
        mag = np.abs(vals)
        mag[:, pad] = np.inf
        sgn = np.where(vals < 0, -1.0, 1.0)
        sgn[:, pad] = 1.0
        sgn_prod = sgn.prod(axis=2)
        i1 = np.argmin(mag, axis=2)
        min1 = np.take_along_axis(mag, i1[:, :, None], axis=2)[:, :, 0]
        mag2 = mag.copy()
        np.put_along_axis(mag2, i1[:, :, None], np.inf, axis=2)
        min2 = mag2.min(axis=2)
        use = np.where(np.arange(vals.shape[2])[None, None, :] == i1[:, :, None], min2[:, :, None], min1[:, :, None])
        c2v = MIN_SUM_SCALE * sgn_prod[:, :, None] * sgn * use
        c2v_flat = np.empty_like(v2c)
        c2v_flat[:, cfg.chk_edges[~pad]] = c2v[:, ~pad]

        inc = c2v_flat[:, cfg.var_edges]        # (B, n_code, dv)
        total = llr + inc.sum(axis=2)
        v2c[:, cfg.var_edges.ravel()] = (total[:, :, None] - inc).reshape(b, -1)

        bits, converged = _row_state(total)
        if converged.all():
            break

    posterior = np.clip(total, -LLR_CLAMP, LLR_CLAMP)
    return bits[:, :cfg.n_info].astype(np.uint8), posterior, converged


def decode(llr: np.ndarray, cfg: CodeConfig, max_iters: int | None = None):
    """Single-codeword decode; see decode_batch."""
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim != 1:
        raise ConfigurationError("decode expects a 1-D LLR vector")
    info, post, conv = decode_batch(llr[None, :], cfg, max_iters)
    return info[0], post[0], bool(conv[0])


def save_alist(path, cfg: CodeConfig) -> None:
    """Persist the parity-check matrix in the standard alist text format."""
    h = cfg.parity_check_dense()
    m, n = h.shape
    var_nb = [np.nonzero(h[:, v])[0] + 1 for v in range(n)]
    chk_nb = [np.nonzero(h[c])[0] + 1 for c in range(m)]
    dv_max = max(len(x) for x in var_nb)
    dc_max = max(len(x) for x in chk_nb)
    lines = [f"{n} {m}", f"{dv_max} {dc_max}",
             " ".join(str(len(x)) for x in var_nb),
             " ".join(str(len(x)) for x in chk_nb)]
    for x in var_nb:
        lines.append(" ".join(str(int(i)) for i in np.pad(x, (0, dv_max - len(x)))))
    for x in chk_nb:
        lines.append(" ".join(str(int(i)) for i in np.pad(x, (0, dc_max - len(x)))))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_alist(path) -> np.ndarray:
    """Read an alist file back into a dense uint8 parity-check matrix."""
    with open(path) as f:
        tok = f.read().split()
    it = iter(tok)
    n, m = int(next(it)), int(next(it))
    dv_max, dc_max = int(next(it)), int(next(it))
    var_deg = [int(next(it)) for _ in range(n)]
    [int(next(it)) for _ in range(m)]
    h = np.zeros((m, n), dtype=np.uint8)
    for v in range(n):
        for j in range(dv_max):
            c = int(next(it))
            if c and j < var_deg[v]:
                h[c - 1, v] = 1
    return h


def code_from_parity(h: np.ndarray, max_iters: int = 25) -> CodeConfig:
    """Build a CodeConfig from an explicit parity-check matrix.

    The matrix must have full row rank; information bits are mapped to the
    non-pivot columns, which are permuted to the front (systematic prefix).
    """
    h = np.asarray(h, dtype=np.uint8)
    n_chk, n_code = h.shape
    n_info = n_code - n_chk
    rank, pivots, rref = _gf2_systemize(h.copy())
    if rank != n_chk:
        raise ConfigurationError(f"parity-check matrix rank {rank} < {n_chk}")
    info_cols = np.setdiff1d(np.arange(n_code), pivots)
    perm = np.concatenate([info_cols, pivots])
    hp = h[:, perm]
    parity_gen = rref[:, info_cols].astype(np.uint8)

    var_of = [[] for _ in range(n_code)]
    chk_rows = []
    e = 0
    for c in range(n_chk):
        row = np.nonzero(hp[c])[0]
        ids = []
        for v in row:
            var_of[v].append(e)
            ids.append(e)
            e += 1
        chk_rows.append(ids)
    dc_max = max(len(r) for r in chk_rows)
    dv_max = max(len(r) for r in var_of)
    if min(len(r) for r in var_of) != dv_max:
        raise ConfigurationError("variable degrees must be uniform")
    chk_edges = np.full((n_chk, dc_max), -1, dtype=np.int64)
    for c, ids in enumerate(chk_rows):
        chk_edges[c, :len(ids)] = ids
    edge_var = np.zeros(e, dtype=np.int64)
    for c in range(n_chk):
        row = np.nonzero(hp[c])[0]
        edge_var[chk_edges[c, :len(row)]] = row
    return CodeConfig(n_info=n_info, n_code=n_code, max_iters=max_iters, seed=-1,
                      var_edges=np.asarray(var_of, dtype=np.int64), chk_edges=chk_edges,
                      edge_var=edge_var, parity_gen=parity_gen)
