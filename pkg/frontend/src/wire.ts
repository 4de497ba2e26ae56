/**
 * Binary file formats shared with the simulator core.
 *
 * SIPTEN1: 8-byte magic "SIPTEN1\0", u32 tensor count, then per tensor
 * u32 rank, u32 dims[rank], little-endian f32 payload in C order.
 *
 * SIPDS1: 8-byte magic "SIPDS1\0\0", u32 version=1, u32 N, u32 N_r,
 * u32 N_t, u32 K, u32 T; then N records of [ls | confidence | truth],
 * complex grids stored as interleaved re/im f32 with resource elements
 * frequency-first (subcarrier index fastest).
 */

import * as fs from "node:fs";

export const MAGIC_TENSOR = "SIPTEN1\0";
export const MAGIC_DATASET = "SIPDS1\0\0";

export class WireFormatError extends Error {}

export interface WireTensor {
  dims: number[];
  data: Float32Array;
}

export function writeTensors(path: string, tensors: WireTensor[]): void {
  let bytes = 8 + 4;
  for (const t of tensors) {
    bytes += 4 + 4 * t.dims.length + 4 * t.data.length;
  }
  const buf = Buffer.alloc(bytes);
  buf.write(MAGIC_TENSOR, 0, "latin1");
  let off = 8;
  off = buf.writeUInt32LE(tensors.length, off);
  for (const t of tensors) {
    const n = t.dims.reduce((a, b) => a * b, 1);
    if (n !== t.data.length) {
      throw new WireFormatError(`dims ${t.dims} do not match payload ${t.data.length}`);
    }
    off = buf.writeUInt32LE(t.dims.length, off);
    for (const d of t.dims) {
      off = buf.writeUInt32LE(d, off);
    }
    for (let i = 0; i < t.data.length; i++) {
      off = buf.writeFloatLE(t.data[i], off);
    }
  }
  fs.writeFileSync(path, buf);
}

export function readTensors(path: string): WireTensor[] {
  const buf = fs.readFileSync(path);
  if (buf.length < 12) {
    throw new WireFormatError("truncated file: header incomplete");
  }
  if (buf.toString("latin1", 0, 8) !== MAGIC_TENSOR) {
    throw new WireFormatError(`bad magic ${JSON.stringify(buf.toString("latin1", 0, 8))}`);
  }
  let off = 8;
  const count = buf.readUInt32LE(off);
  off += 4;
  const out: WireTensor[] = [];
  for (let i = 0; i < count; i++) {
    if (off + 4 > buf.length) {
      throw new WireFormatError("truncated file: missing tensor rank");
    }
    const rank = buf.readUInt32LE(off);
    off += 4;
    if (rank > 16) {
      throw new WireFormatError(`implausible tensor rank ${rank}`);
    }
    const dims: number[] = [];
    for (let r = 0; r < rank; r++) {
      if (off + 4 > buf.length) {
        throw new WireFormatError("truncated file: missing dims");
      }
      dims.push(buf.readUInt32LE(off));
      off += 4;
    }
    const n = dims.reduce((a, b) => a * b, 1);
    if (off + 4 * n > buf.length) {
      throw new WireFormatError("truncated file: payload short");
    }
    const data = new Float32Array(n);
    for (let j = 0; j < n; j++) {
      data[j] = buf.readFloatLE(off);
      off += 4;
    }
    out.push({ dims, data });
  }
  if (off !== buf.length) {
    throw new WireFormatError("trailing bytes after last tensor");
  }
  return out;
}

export interface DatasetRecord {
  /** per-link complex grids as re/im pairs, indexed [m][n] -> {re, im} of K*T grids (k-major) */
  lsRe: Float32Array; // (N_r*N_t*K*T), link-major, k fastest within each t
  lsIm: Float32Array;
  confidence: Float32Array; // (N_t*K*T)
  truthRe: Float32Array;
  truthIm: Float32Array;
}

export interface Dataset {
  n: number;
  nR: number;
  nT: number;
  K: number;
  T: number;
  records: DatasetRecord[];
}

/** Split interleaved wire order (t-major, k fastest) into k-major planes. */
function splitComplex(buf: Buffer, off: number, links: number, K: number, T: number) {
  const re = new Float32Array(links * K * T);
  const im = new Float32Array(links * K * T);
  let p = off;
  for (let l = 0; l < links; l++) {
    for (let t = 0; t < T; t++) {
      for (let k = 0; k < K; k++) {
        const idx = l * K * T + k * T + t;
        re[idx] = buf.readFloatLE(p);
        im[idx] = buf.readFloatLE(p + 4);
        p += 8;
      }
    }
  }
  return { re, im, next: p };
}

export function readDataset(path: string): Dataset {
  const buf = fs.readFileSync(path);
  if (buf.length < 32) {
    throw new WireFormatError("truncated dataset header");
  }
  if (buf.toString("latin1", 0, 8) !== MAGIC_DATASET) {
    throw new WireFormatError(`bad magic ${JSON.stringify(buf.toString("latin1", 0, 8))}`);
  }
  const version = buf.readUInt32LE(8);
  if (version !== 1) {
    throw new WireFormatError(`unsupported dataset version ${version}`);
  }
  const n = buf.readUInt32LE(12);
  const nR = buf.readUInt32LE(16);
  const nT = buf.readUInt32LE(20);
  const K = buf.readUInt32LE(24);
  const T = buf.readUInt32LE(28);
  const links = nR * nT;
  const recordBytes = 4 * (2 * links * K * T + nT * K * T + 2 * links * K * T);
  if (buf.length !== 32 + n * recordBytes) {
    throw new WireFormatError(
      `dataset length ${buf.length} != expected ${32 + n * recordBytes}`);
  }
  const records: DatasetRecord[] = [];
  let off = 32;
  for (let i = 0; i < n; i++) {
    const ls = splitComplex(buf, off, links, K, T);
    off = ls.next;
    const confidence = new Float32Array(nT * K * T);
    for (let nn = 0; nn < nT; nn++) {
      for (let t = 0; t < T; t++) {
        for (let k = 0; k < K; k++) {
          confidence[nn * K * T + k * T + t] = buf.readFloatLE(off);
          off += 4;
        }
      }
    }
    const truth = splitComplex(buf, off, links, K, T);
    off = truth.next;
    records.push({ lsRe: ls.re, lsIm: ls.im, confidence, truthRe: truth.re, truthIm: truth.im });
  }
  return { n, nR, nT, K, T, records };
}
