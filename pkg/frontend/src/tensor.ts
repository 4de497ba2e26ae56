/**
 * Minimal dense float32 tensor plus the seeded RNG used for reproducible
 * parameter initialization.
 */

export class Tensor {
  data: Float32Array;
  shape: number[];

  constructor(shape: number[], data?: Float32Array) {
    this.shape = shape.slice();
    const n = shape.reduce((a, b) => a * b, 1);
    if (data) {
      if (data.length !== n) {
        throw new Error(`data length ${data.length} != shape product ${n}`);
      }
      this.data = data;
    } else {
      this.data = new Float32Array(n);
    }
  }

  get size(): number {
    return this.data.length;
  }

  static zerosLike(t: Tensor): Tensor {
    return new Tensor(t.shape);
  }

  clone(): Tensor {
    return new Tensor(this.shape, this.data.slice());
  }

  fill(v: number): this {
    this.data.fill(v);
    return this;
  }
}

/** mulberry32: tiny deterministic PRNG, plenty for weight init. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Box-Muller gaussian sampler on top of a uniform source. */
export function gaussian(rand: () => number): () => number {
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    do {
      u = rand();
    } while (u <= 1e-12);
    v = rand();
    const r = Math.sqrt(-2.0 * Math.log(u));
    spare = r * Math.sin(2 * Math.PI * v);
    return r * Math.cos(2 * Math.PI * v);
  };
}
