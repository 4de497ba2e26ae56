/**
 * Hand-rolled layers with explicit forward/backward passes. Feature maps are
 * channel-major Float32Arrays: x[c*H*W + h*W + w]. Convolutions use same
 * padding so spatial dimensions are preserved.
 */

import { gaussian, mulberry32 } from "./tensor.js";

export interface Param {
  name: string;
  value: Float32Array;
  grad: Float32Array;
}

export function makeParam(name: string, size: number): Param {
  return { name, value: new Float32Array(size), grad: new Float32Array(size) };
}

export class Conv2d {
  /** weights (Cout, Cin, F, F), bias (Cout) */
  w: Param;
  b: Param;

  constructor(public name: string, public cin: number, public cout: number,
              public f: number, rand: () => number) {
    this.w = makeParam(`${name}.w`, cout * cin * f * f);
    this.b = makeParam(`${name}.b`, cout);
    const g = gaussian(rand);
    const scale = Math.sqrt(2.0 / (cin * f * f));
    for (let i = 0; i < this.w.value.length; i++) {
      this.w.value[i] = g() * scale;
    }
  }

  params(): Param[] {
    return [this.w, this.b];
  }

  forward(x: Float32Array, H: number, W: number): Float32Array {
    const { cin, cout, f } = this;
    const pad = (f - 1) >> 1;
    const plane = H * W;
    const out = new Float32Array(cout * plane);
    const wv = this.w.value;
    const bv = this.b.value;
    for (let o = 0; o < cout; o++) {
      out.fill(bv[o], o * plane, (o + 1) * plane);
    }
    // tap-major accumulation: the innermost loop is a contiguous axpy
    for (let o = 0; o < cout; o++) {
      const ob = o * plane;
      for (let c = 0; c < cin; c++) {
        const cb = c * plane;
        const wb = (o * cin + c) * f * f;
        for (let dy = 0; dy < f; dy++) {
          const oy = dy - pad;
          const yLo = Math.max(0, -oy);
          const yHi = Math.min(H, H - oy);
          for (let dxp = 0; dxp < f; dxp++) {
            const ox = dxp - pad;
            const wgt = wv[wb + dy * f + dxp];
            if (wgt === 0) continue;
            const xLo = Math.max(0, -ox);
            const xHi = Math.min(W, W - ox);
            for (let y = yLo; y < yHi; y++) {
              const orow = ob + y * W;
              const xrow = cb + (y + oy) * W + ox;
              for (let x0 = xLo; x0 < xHi; x0++) {
                out[orow + x0] += wgt * x[xrow + x0];
              }
            }
          }
        }
      }
    }
    return out;
  }

  /** Accumulates parameter gradients; returns gradient w.r.t. the input. */
  backward(x: Float32Array, dOut: Float32Array, H: number, W: number): Float32Array {
    const { cin, cout, f } = this;
    const pad = (f - 1) >> 1;
    const plane = H * W;
    const dx = new Float32Array(cin * plane);
    const wv = this.w.value;
    const wg = this.w.grad;
    const bg = this.b.grad;
    for (let o = 0; o < cout; o++) {
      const ob = o * plane;
      let acc = 0;
      for (let j = 0; j < plane; j++) {
        acc += dOut[ob + j];
      }
      bg[o] += acc;
    }
    for (let o = 0; o < cout; o++) {
      const ob = o * plane;
      for (let c = 0; c < cin; c++) {
        const cb = c * plane;
        const wb = (o * cin + c) * f * f;
        for (let dy = 0; dy < f; dy++) {
          const oy = dy - pad;
          const yLo = Math.max(0, -oy);
          const yHi = Math.min(H, H - oy);
          for (let dxp = 0; dxp < f; dxp++) {
            const ox = dxp - pad;
            const xLo = Math.max(0, -ox);
            const xHi = Math.min(W, W - ox);
            const wgt = wv[wb + dy * f + dxp];
            let wacc = 0;
            for (let y = yLo; y < yHi; y++) {
              const orow = ob + y * W;
              const xrow = cb + (y + oy) * W + ox;
              for (let x0 = xLo; x0 < xHi; x0++) {
                const go = dOut[orow + x0];
                wacc += go * x[xrow + x0];
                dx[xrow + x0] += go * wgt;
              }
            }
            wg[wb + dy * f + dxp] += wacc;
          }
        }
      }
    }
    return dx;
  }
}

export class Dense {
  /** weights (nOut, nIn), bias (nOut) */
  w: Param;
  b: Param;

  constructor(public name: string, public nIn: number, public nOut: number,
              rand: () => number) {
    this.w = makeParam(`${name}.w`, nOut * nIn);
    this.b = makeParam(`${name}.b`, nOut);
    const g = gaussian(rand);
    const scale = Math.sqrt(2.0 / nIn);
    for (let i = 0; i < this.w.value.length; i++) {
      this.w.value[i] = g() * scale;
    }
  }

  params(): Param[] {
    return [this.w, this.b];
  }

  /** x: (rows, nIn) row-major -> (rows, nOut) */
  forward(x: Float32Array, rows: number): Float32Array {
    const { nIn, nOut } = this;
    const out = new Float32Array(rows * nOut);
    const wv = this.w.value;
    const bv = this.b.value;
    for (let r = 0; r < rows; r++) {
      const xb = r * nIn;
      const ob = r * nOut;
      for (let o = 0; o < nOut; o++) {
        let acc = bv[o];
        const wb = o * nIn;
        for (let i = 0; i < nIn; i++) {
          acc += wv[wb + i] * x[xb + i];
        }
        out[ob + o] = acc;
      }
    }
    return out;
  }

  backward(x: Float32Array, dOut: Float32Array, rows: number): Float32Array {
    const { nIn, nOut } = this;
    const dx = new Float32Array(rows * nIn);
    const wv = this.w.value;
    const wg = this.w.grad;
    const bg = this.b.grad;
    for (let r = 0; r < rows; r++) {
      const xb = r * nIn;
      const ob = r * nOut;
      for (let o = 0; o < nOut; o++) {
        const go = dOut[ob + o];
        if (go === 0) continue;
        bg[o] += go;
        const wb = o * nIn;
        for (let i = 0; i < nIn; i++) {
          wg[wb + i] += go * x[xb + i];
          dx[xb + i] += go * wv[wb + i];
        }
      }
    }
    return dx;
  }
}

export function relu(x: Float32Array): Float32Array {
  const out = new Float32Array(x.length);
  for (let i = 0; i < x.length; i++) {
    out[i] = x[i] > 0 ? x[i] : 0;
  }
  return out;
}

export function reluBackward(x: Float32Array, dOut: Float32Array): Float32Array {
  const dx = new Float32Array(x.length);
  for (let i = 0; i < x.length; i++) {
    dx[i] = x[i] > 0 ? dOut[i] : 0;
  }
  return dx;
}

export function sigmoid(x: Float32Array): Float32Array {
  const out = new Float32Array(x.length);
  for (let i = 0; i < x.length; i++) {
    out[i] = 1.0 / (1.0 + Math.exp(-x[i]));
  }
  return out;
}

export function sigmoidBackward(y: Float32Array, dOut: Float32Array): Float32Array {
  const dx = new Float32Array(y.length);
  for (let i = 0; i < y.length; i++) {
    dx[i] = dOut[i] * y[i] * (1.0 - y[i]);
  }
  return dx;
}
