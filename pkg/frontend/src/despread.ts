/**
 * Despreading front end: block averaging over L1 adjacent subcarriers and
 * L2 adjacent OFDM symbols (each time block's mean replicated across its
 * columns), plus the nearest-neighbor frequency upsampler used by the
 * identity stub. Grids are stored k-major: grid[k*T + t].
 */

export function despread(grid: Float32Array, K: number, T: number,
                          L1: number, L2: number): Float32Array {
  if (K % L1 !== 0) {
    throw new Error(`L1=${L1} does not divide K=${K}`);
  }
  const fdB = K / L1;
  const out = new Float32Array(fdB * T);
  for (let b = 0; b < fdB; b++) {
    for (let t0 = 0; t0 < T; t0 += L2) {
      const t1 = Math.min(t0 + L2, T);
      let acc = 0;
      for (let k = b * L1; k < (b + 1) * L1; k++) {
        for (let t = t0; t < t1; t++) {
          acc += grid[k * T + t];
        }
      }
      const mean = acc / (L1 * (t1 - t0));
      for (let t = t0; t < t1; t++) {
        out[b * T + t] = mean;
      }
    }
  }
  return out;
}

export function upsampleFrequency(coarse: Float32Array, fdB: number, T: number,
                                  L1: number): Float32Array {
  const out = new Float32Array(fdB * L1 * T);
  for (let b = 0; b < fdB; b++) {
    for (let r = 0; r < L1; r++) {
      out.set(coarse.subarray(b * T, (b + 1) * T), (b * L1 + r) * T);
    }
  }
  return out;
}

/** Global average pooling over the frequency axis: (K, T) -> (T). */
export function poolFrequency(grid: Float32Array, K: number, T: number): Float32Array {
  const out = new Float32Array(T);
  for (let t = 0; t < T; t++) {
    let acc = 0;
    for (let k = 0; k < K; k++) {
      acc += grid[k * T + t];
    }
    out[t] = acc / K;
  }
  return out;
}
