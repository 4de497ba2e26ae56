/**
 * The learned refined channel estimator for one spatial link.
 *
 * Pipeline: despread maps (2 x FD_B x T) -> Conv1 -> 4 residual blocks
 * (conv-ReLU-conv with additive skip) -> Conv2 -> channel-wise attention
 * reweighting driven by frequency-pooled raw estimates and decoder
 * confidences -> Conv3 -> per-symbol dense interpolator producing the
 * real/imag parts of the full-resolution K x T channel estimate.
 */

import * as fs from "node:fs";
import { Conv2d, Dense, Param, relu, reluBackward, sigmoid, sigmoidBackward } from "./layers.js";
import { mulberry32 } from "./tensor.js";

export interface ModelConfig {
  K: number;
  T: number;
  L1: number;   // frequency averaging length
  L2: number;   // time averaging length
  C: number;    // conv channels
  F: number;    // kernel size
  Nh1: number;  // attention hidden width
  Nh2: number;  // interpolator hidden width
  seed: number;
}

export const DEFAULT_HYPERS = { L1: 6, L2: 2, C: 8, F: 3, Nh1: 16, Nh2: 128 };

export interface ForwardCache {
  maps: Float32Array;
  attIn: Float32Array;
  conv1Out: Float32Array;
  resIn: Float32Array[];
  resMid: Float32Array[];   // pre-activation of the inner conv
  resRelu: Float32Array[];
  conv2In: Float32Array;
  feat: Float32Array;       // conv2 output (attention target)
  att1: Float32Array;       // dense1 pre-activation
  attRelu: Float32Array;
  attWeights: Float32Array; // sigmoid output, length C
  gated: Float32Array;
  conv3Out: Float32Array;
  interpIn: Float32Array;   // (T, C*FD_B)
  hid: Float32Array;        // (T, Nh2) pre-activation
  hidRelu: Float32Array;
  out: Float32Array;        // (T, 2K)
}

export class ChannelEstimator {
  cfg: ModelConfig;
  fdB: number;
  conv1: Conv2d;
  resA: Conv2d[] = [];
  resB: Conv2d[] = [];
  conv2: Conv2d;
  att1: Dense;
  att2: Dense;
  conv3: Conv2d;
  interp1: Dense;
  interp2: Dense;

  constructor(cfg: ModelConfig) {
    if (cfg.K % cfg.L1 !== 0) {
      throw new Error(`L1=${cfg.L1} does not divide K=${cfg.K}`);
    }
    this.cfg = cfg;
    this.fdB = cfg.K / cfg.L1;
    const rand = mulberry32(cfg.seed);
    const { C, F, T, K, Nh1, Nh2 } = cfg;
    this.conv1 = new Conv2d("conv1", 2, C, F, rand);
    for (let i = 0; i < 4; i++) {
      this.resA.push(new Conv2d(`res${i}.a`, C, C, F, rand));
      this.resB.push(new Conv2d(`res${i}.b`, C, C, F, rand));
    }
    this.conv2 = new Conv2d("conv2", C, C, F, rand);
    this.att1 = new Dense("att1", 3 * T, Nh1, rand);
    this.att2 = new Dense("att2", Nh1, C, rand);
    this.conv3 = new Conv2d("conv3", C, C, F, rand);
    this.interp1 = new Dense("interp1", C * this.fdB, Nh2, rand);
    this.interp2 = new Dense("interp2", Nh2, 2 * K, rand);
  }

  layers(): (Conv2d | Dense)[] {
    return [this.conv1, ...this.resA, ...this.resB, this.conv2,
            this.att1, this.att2, this.conv3, this.interp1, this.interp2];
  }

  params(): Param[] {
    return this.layers().flatMap((l) => l.params());
  }

  paramCount(): number {
    return this.params().reduce((acc, p) => acc + p.value.length, 0);
  }

  zeroGrads(): void {
    for (const p of this.params()) {
      p.grad.fill(0);
    }
  }

  /**
   * maps: channel-major (2, FD_B, T); attIn: length 3T
   * (frequency-pooled re/im of the raw estimate and the confidence map).
   */
  forward(maps: Float32Array, attIn: Float32Array,
          opts: { forceAttentionOne?: boolean } = {}): ForwardCache {
    const { C, T, K } = this.cfg;
    const H = this.fdB;
    const conv1Out = this.conv1.forward(maps, H, T);
    const resIn: Float32Array[] = [];
    const resMid: Float32Array[] = [];
    const resRelu: Float32Array[] = [];
    let x = conv1Out;
    for (let i = 0; i < 4; i++) {
      resIn.push(x);
      const mid = this.resA[i].forward(x, H, T);
      resMid.push(mid);
      const act = relu(mid);
      resRelu.push(act);
      const inner = this.resB[i].forward(act, H, T);
      const out = new Float32Array(x.length);
      for (let j = 0; j < out.length; j++) {
        out[j] = x[j] + inner[j];
      }
      x = out;
    }
    const conv2In = x;
    const feat = this.conv2.forward(conv2In, H, T);

    const att1 = this.att1.forward(attIn, 1);
    const attRelu = relu(att1);
    const att2 = this.att2.forward(attRelu, 1);
    const attWeights = opts.forceAttentionOne
      ? new Float32Array(C).fill(1.0)
      : sigmoid(att2);

    const gated = new Float32Array(feat.length);
    const plane = H * T;
    for (let c = 0; c < C; c++) {
      const a = attWeights[c];
      const base = c * plane;
      for (let j = 0; j < plane; j++) {
        gated[base + j] = feat[base + j] * a;
      }
    }
    const conv3Out = this.conv3.forward(gated, H, T);

    // (C, FD_B, T) -> (T, C*FD_B), channel-major flattening within a row
    const interpIn = new Float32Array(T * C * H);
    for (let t = 0; t < T; t++) {
      const rb = t * C * H;
      for (let c = 0; c < C; c++) {
        for (let b = 0; b < H; b++) {
          interpIn[rb + c * H + b] = conv3Out[c * plane + b * T + t];
        }
      }
    }
    const hid = this.interp1.forward(interpIn, T);
    const hidRelu = relu(hid);
    const out = this.interp2.forward(hidRelu, T);

    return { maps, attIn, conv1Out, resIn, resMid, resRelu, conv2In, feat,
             att1, attRelu, attWeights, gated, conv3Out, interpIn, hid,
             hidRelu, out };
  }

  /** Channel estimate as k-major grids from a forward pass output. */
  outputToGrid(out: Float32Array): { re: Float32Array; im: Float32Array } {
    const { K, T } = this.cfg;
    const re = new Float32Array(K * T);
    const im = new Float32Array(K * T);
    for (let t = 0; t < T; t++) {
      for (let k = 0; k < K; k++) {
        re[k * T + t] = out[t * 2 * K + k];
        im[k * T + t] = out[t * 2 * K + K + k];
      }
    }
    return { re, im };
  }

  /** Accumulates gradients for one sample given dL/d(out). */
  backward(cache: ForwardCache, dOut: Float32Array): void {
    const { C, T } = this.cfg;
    const H = this.fdB;
    const plane = H * T;

    const dHidRelu = this.interp2.backward(cache.hidRelu, dOut, T);
    const dHid = reluBackward(cache.hid, dHidRelu);
    const dInterpIn = this.interp1.backward(cache.interpIn, dHid, T);

    const dConv3Out = new Float32Array(C * plane);
    for (let t = 0; t < T; t++) {
      const rb = t * C * H;
      for (let c = 0; c < C; c++) {
        for (let b = 0; b < H; b++) {
          dConv3Out[c * plane + b * T + t] = dInterpIn[rb + c * H + b];
        }
      }
    }
    const dGated = this.conv3.backward(cache.gated, dConv3Out, H, T);

    const dFeat = new Float32Array(dGated.length);
    const dAttWeights = new Float32Array(C);
    for (let c = 0; c < C; c++) {
      const a = cache.attWeights[c];
      const base = c * plane;
      let acc = 0;
      for (let j = 0; j < plane; j++) {
        dFeat[base + j] = dGated[base + j] * a;
        acc += dGated[base + j] * cache.feat[base + j];
      }
      dAttWeights[c] = acc;
    }
    const dAtt2 = sigmoidBackward(cache.attWeights, dAttWeights);
    const dAttRelu = this.att2.backward(cache.attRelu, dAtt2, 1);
    const dAtt1 = reluBackward(cache.att1, dAttRelu);
    this.att1.backward(cache.attIn, dAtt1, 1);

    let dx = this.conv2.backward(cache.conv2In, dFeat, H, T);
    for (let i = 3; i >= 0; i--) {
      const dInner = dx;
      const dRelu = this.resB[i].backward(cache.resRelu[i], dInner, H, T);
      const dMid = reluBackward(cache.resMid[i], dRelu);
      const dResIn = this.resA[i].backward(cache.resIn[i], dMid, H, T);
      const merged = new Float32Array(dx.length);
      for (let j = 0; j < merged.length; j++) {
        merged[j] = dx[j] + dResIn[j];
      }
      dx = merged;
    }
    this.conv1.backward(cache.maps, dx, H, T);
  }

  save(path: string): void {
    const params: Record<string, string> = {};
    for (const p of this.params()) {
      params[p.name] = Buffer.from(p.value.buffer, p.value.byteOffset,
                                   p.value.byteLength).toString("base64");
    }
    const doc = { version: 1, config: this.cfg, params };
    fs.writeFileSync(path, JSON.stringify(doc));
  }

  static load(path: string): ChannelEstimator {
    const doc = JSON.parse(fs.readFileSync(path, "utf8"));
    if (doc.version !== 1) {
      throw new Error(`unsupported checkpoint version ${doc.version}`);
    }
    const model = new ChannelEstimator(doc.config as ModelConfig);
    for (const p of model.params()) {
      const b64 = doc.params[p.name];
      if (!b64) {
        throw new Error(`checkpoint missing parameter ${p.name}`);
      }
      const buf = Buffer.from(b64, "base64");
      if (buf.byteLength !== p.value.byteLength) {
        throw new Error(`checkpoint parameter ${p.name} has wrong size`);
      }
      p.value.set(new Float32Array(buf.buffer, buf.byteOffset, p.value.length));
    }
    return model;
  }
}
