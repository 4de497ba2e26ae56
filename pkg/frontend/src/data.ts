/**
 * Turns dataset records into per-link training samples: despread feature
 * maps, frequency-pooled attention inputs, and full-resolution targets.
 * The network shares weights across links, so every (rx, tx) pair of every
 * record becomes an independent sample.
 */

import { despread, poolFrequency } from "./despread.js";
import { Dataset } from "./wire.js";

export interface LinkSample {
  maps: Float32Array;    // (2, FD_B, T) channel-major
  attIn: Float32Array;   // (3T)
  targetRe: Float32Array; // (K*T) k-major
  targetIm: Float32Array;
}

export function buildAttentionInput(lsRe: Float32Array, lsIm: Float32Array,
                                    conf: Float32Array, K: number, T: number): Float32Array {
  const out = new Float32Array(3 * T);
  out.set(poolFrequency(lsRe, K, T), 0);
  out.set(poolFrequency(lsIm, K, T), T);
  out.set(poolFrequency(conf, K, T), 2 * T);
  return out;
}

export function buildMaps(lsRe: Float32Array, lsIm: Float32Array,
                          K: number, T: number, L1: number, L2: number): Float32Array {
  const fdB = K / L1;
  const maps = new Float32Array(2 * fdB * T);
  maps.set(despread(lsRe, K, T, L1, L2), 0);
  maps.set(despread(lsIm, K, T, L1, L2), fdB * T);
  return maps;
}

export function linkSamples(ds: Dataset, L1: number, L2: number): LinkSample[] {
  const { K, T, nR, nT } = ds;
  const grid = K * T;
  const samples: LinkSample[] = [];
  for (const rec of ds.records) {
    for (let m = 0; m < nR; m++) {
      for (let n = 0; n < nT; n++) {
        const l = m * nT + n;
        const lsRe = rec.lsRe.subarray(l * grid, (l + 1) * grid);
        const lsIm = rec.lsIm.subarray(l * grid, (l + 1) * grid);
        const conf = rec.confidence.subarray(n * grid, (n + 1) * grid);
        samples.push({
          maps: buildMaps(lsRe, lsIm, K, T, L1, L2),
          attIn: buildAttentionInput(lsRe, lsIm, conf, K, T),
          targetRe: rec.truthRe.subarray(l * grid, (l + 1) * grid),
          targetIm: rec.truthIm.subarray(l * grid, (l + 1) * grid),
        });
      }
    }
  }
  return samples;
}
