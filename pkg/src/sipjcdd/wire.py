"""Binary file formats shared between the simulator core and external tools.

All integers are little-endian u32 and every magic is 8 bytes:

* ``SIPCORR1`` — correlation matrices. Header: magic, u32 T, u32 K, u32 S
  (spatial dimension), u32 sample_count; then R_time, R_freq, R_spat as
  row-major f64 with interleaved real/imag parts.
* ``SIPTEN1\\0`` — generic tensor bundle for estimator RPC. Header: magic,
  u32 n_tensors; per tensor: u32 rank, u32 dims[rank], then C-order f32
  payload. A request carries [ls_refined (2,N_r,N_t,K,T), confidence
  (N_t,K,T), sigma_w2 (1)]; a response carries [h_hat (2,N_r,N_t,K,T)].
* ``SIPDS1\\0\\0`` — training dataset. Header: magic, u32 version=1, u32 N,
  u32 N_r, u32 N_t, u32 K, u32 T (28 bytes); then N records, each holding
  the refined LS estimate (interleaved re/im f32, links in (m, n) order,
  REs frequency-first), the confidence map (N_t*K*T f32, same RE order),
  and the true channel (same layout as the LS estimate).
"""

from __future__ import annotations

import struct

import numpy as np

from .channel import CorrelationSet
from .errors import ShapeMismatchError, WireFormatError

MAGIC_CORR = b"SIPCORR1"
MAGIC_TENSOR = b"SIPTEN1\x00"
MAGIC_DATASET = b"SIPDS1\x00\x00"

__all__ = ["save_correlations", "load_correlations", "write_tensors", "read_tensors",
           "DatasetWriter", "read_dataset", "dataset_header", "grid_to_wire", "wire_to_grid"]


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise WireFormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _write_complex_f64(f, mat: np.ndarray) -> None:
    inter = np.ascontiguousarray(mat, dtype=np.complex128).view(np.float64)
    f.write(inter.tobytes())
    # complex128 memory layout is already interleaved re/im little-endian f64


def _read_complex_f64(f, shape) -> np.ndarray:
    n = int(np.prod(shape)) * 2
    raw = np.frombuffer(_read_exact(f, n * 8), dtype="<f8")
    return raw.view(np.complex128).reshape(shape).copy()


def save_correlations(path, corr: CorrelationSet) -> None:
    t = corr.R_time.shape[0]
    k = corr.R_freq.shape[0]
    s = corr.R_spat.shape[0]
    with open(path, "wb") as f:
        f.write(MAGIC_CORR)
        f.write(struct.pack("<IIII", t, k, s, corr.sample_count))
        _write_complex_f64(f, corr.R_time)
        _write_complex_f64(f, corr.R_freq)
        _write_complex_f64(f, corr.R_spat)


def load_correlations(path) -> CorrelationSet:
    with open(path, "rb") as f:
        magic = _read_exact(f, 8)
        if magic != MAGIC_CORR:
            raise WireFormatError(f"bad magic {magic!r}, expected {MAGIC_CORR!r}")
        t, k, s, count = struct.unpack("<IIII", _read_exact(f, 16))
        r_time = _read_complex_f64(f, (t, t))
        r_freq = _read_complex_f64(f, (k, k))
        r_spat = _read_complex_f64(f, (s, s))
    return CorrelationSet(R_time=r_time, R_freq=r_freq, R_spat=r_spat, sample_count=count)


def write_tensors(path, tensors) -> None:
    """Write a SIPTEN1 bundle of float32 tensors."""
    with open(path, "wb") as f:
        f.write(MAGIC_TENSOR)
        f.write(struct.pack("<I", len(tensors)))
        for t in tensors:
            arr = np.ascontiguousarray(t, dtype="<f4")
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_tensors(path):
    """Read a SIPTEN1 bundle, returning a list of float32 arrays."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 8)
        if magic != MAGIC_TENSOR:
            raise WireFormatError(f"bad magic {magic!r}, expected {MAGIC_TENSOR!r}")
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        out = []
        for _ in range(count):
            (rank,) = struct.unpack("<I", _read_exact(f, 4))
            if rank > 16:
                raise WireFormatError(f"implausible tensor rank {rank}")
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            n = int(np.prod(dims)) if rank else 1
            payload = np.frombuffer(_read_exact(f, 4 * n), dtype="<f4")
            out.append(payload.reshape(dims).copy())
        trailing = f.read(1)
        if trailing:
            raise WireFormatError("trailing bytes after last tensor")
    return out


def expect_shape(arr: np.ndarray, shape) -> np.ndarray:
    if tuple(arr.shape) != tuple(shape):
        raise ShapeMismatchError(shape, arr.shape)
    return arr


def grid_to_wire(h: np.ndarray) -> np.ndarray:
    """Complex (..., K, T) -> interleaved-re/im f32 with REs frequency-first."""
    hkt = np.swapaxes(np.asarray(h, dtype=np.complex64), -1, -2)  # (..., T, K)
    flat = np.ascontiguousarray(hkt).view(np.float32)
    return flat.reshape(h.shape[:-2] + (-1,))


def wire_to_grid(flat: np.ndarray, K: int, T: int) -> np.ndarray:
    """Inverse of grid_to_wire."""
    arr = np.ascontiguousarray(flat, dtype=np.float32)
    c = arr.view(np.complex64).reshape(arr.shape[:-1] + (T, K))
    return np.swapaxes(c, -1, -2).astype(np.complex128)


class DatasetWriter:
    """Incrementally writes SIPDS1 records; the sample count is patched into
    the header on close."""

    def __init__(self, path, n_r: int, n_t: int, K: int, T: int):
        self._f = open(path, "wb")
        self.shape = (n_r, n_t, K, T)
        self.count = 0
        self._f.write(MAGIC_DATASET)
        self._f.write(struct.pack("<IIIIII", 1, 0, n_r, n_t, K, T))

    def write_record(self, ls: np.ndarray, confidence: np.ndarray, truth: np.ndarray) -> None:
        n_r, n_t, K, T = self.shape
        expect_shape(ls, (n_r, n_t, K, T))
        expect_shape(confidence, (n_t, K, T))
        expect_shape(truth, (n_r, n_t, K, T))
        self._f.write(grid_to_wire(ls).astype("<f4").tobytes())
        conf = np.swapaxes(np.asarray(confidence, dtype="<f4"), -1, -2)
        self._f.write(np.ascontiguousarray(conf).tobytes())
        self._f.write(grid_to_wire(truth).astype("<f4").tobytes())
        self.count += 1

    def close(self) -> None:
        self._f.seek(12)
        self._f.write(struct.pack("<I", self.count))
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def dataset_header(path):
    """(N, N_r, N_t, K, T) from a SIPDS1 file."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 8)
        if magic != MAGIC_DATASET:
            raise WireFormatError(f"bad magic {magic!r}, expected {MAGIC_DATASET!r}")
        version, n, n_r, n_t, k, t = struct.unpack("<IIIIII", _read_exact(f, 24))
    if version != 1:
        raise WireFormatError(f"unsupported dataset version {version}")
    return n, n_r, n_t, k, t


def read_dataset(path):
    """Load a SIPDS1 file -> (ls, confidence, truth) arrays.

    ls and truth have shape (N, N_r, N_t, K, T) complex64; confidence has
    shape (N, N_t, K, T) float32.
    """
    n, n_r, n_t, k, t = dataset_header(path)
    ls = np.empty((n, n_r, n_t, k, t), dtype=np.complex64)
    conf = np.empty((n, n_t, k, t), dtype=np.float32)
    truth = np.empty((n, n_r, n_t, k, t), dtype=np.complex64)
    link_floats = 2 * n_r * n_t * k * t
    conf_floats = n_t * k * t
    with open(path, "rb") as f:
        f.seek(32)
        for i in range(n):
            raw = np.frombuffer(_read_exact(f, 4 * link_floats), dtype="<f4")
            ls[i] = wire_to_grid(raw.reshape(n_r, n_t, -1), k, t)
            raw = np.frombuffer(_read_exact(f, 4 * conf_floats), dtype="<f4")
            conf[i] = np.swapaxes(raw.reshape(n_t, t, k), -1, -2)
            raw = np.frombuffer(_read_exact(f, 4 * link_floats), dtype="<f4")
            truth[i] = wire_to_grid(raw.reshape(n_r, n_t, -1), k, t)
        if f.read(1):
            raise WireFormatError("trailing bytes after last record")
    return ls, conf, truth
