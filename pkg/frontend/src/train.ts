/**
 * Supervised training: Adam on the mean squared error between estimated and
 * true channel coefficients, averaged over links and resource elements.
 */

import * as fs from "node:fs";
import { Adam } from "./adam.js";
import { LinkSample } from "./data.js";
import { ChannelEstimator, ForwardCache } from "./model.js";
import { mulberry32 } from "./tensor.js";

export interface TrainOptions {
  epochs: number;
  batchSize: number;
  lr: number;
  shuffleSeed: number;
  lossCsvPath?: string;
  logEvery?: number;
  onEpoch?: (epoch: number, loss: number) => void;
}

export function sampleLoss(model: ChannelEstimator, cache: ForwardCache,
                           sample: LinkSample): { loss: number; dOut: Float32Array } {
  const { K, T } = model.cfg;
  const w = K * T;
  const dOut = new Float32Array(T * 2 * K);
  let acc = 0;
  for (let t = 0; t < T; t++) {
    for (let k = 0; k < K; k++) {
      const re = cache.out[t * 2 * K + k] - sample.targetRe[k * T + t];
      const im = cache.out[t * 2 * K + K + k] - sample.targetIm[k * T + t];
      acc += re * re + im * im;
      dOut[t * 2 * K + k] = 2 * re / w;
      dOut[t * 2 * K + K + k] = 2 * im / w;
    }
  }
  return { loss: acc / w, dOut };
}

export function evaluateMse(model: ChannelEstimator, samples: LinkSample[]): number {
  let acc = 0;
  for (const s of samples) {
    const cache = model.forward(s.maps, s.attIn);
    acc += sampleLoss(model, cache, s).loss;
  }
  // per complex coefficient, matching the training objective
  return acc / samples.length;
}

export function train(model: ChannelEstimator, samples: LinkSample[],
                      opts: TrainOptions): number[] {
  if (samples.length === 0) {
    throw new Error("empty training set");
  }
  const optimizer = new Adam(model.params(), opts.lr);
  const rand = mulberry32(opts.shuffleSeed);
  const order = samples.map((_, i) => i);
  const losses: number[] = [];
  const lossLines: string[] = ["epoch,loss"];

  for (let epoch = 0; epoch < opts.epochs; epoch++) {
    // Fisher-Yates with the deterministic source
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rand() * (i + 1));
      [order[i], order[j]] = [order[j], order[i]];
    }
    let epochLoss = 0;
    let batches = 0;
    for (let start = 0; start < order.length; start += opts.batchSize) {
      const idx = order.slice(start, start + opts.batchSize);
      model.zeroGrads();
      let batchLoss = 0;
      for (const i of idx) {
        const s = samples[i];
        const cache = model.forward(s.maps, s.attIn);
        const { loss, dOut } = sampleLoss(model, cache, s);
        batchLoss += loss;
        const scale = 1.0 / idx.length;
        for (let j = 0; j < dOut.length; j++) {
          dOut[j] *= scale;
        }
        model.backward(cache, dOut);
      }
      batchLoss /= idx.length;
      if (!Number.isFinite(batchLoss)) {
        throw new Error(
          `non-finite loss at epoch ${epoch}, batch ${batches}: ${batchLoss}`);
      }
      optimizer.step();
      epochLoss += batchLoss;
      batches += 1;
    }
    epochLoss /= batches;
    losses.push(epochLoss);
    lossLines.push(`${epoch},${epochLoss}`);
    if (opts.onEpoch && (!opts.logEvery || epoch % opts.logEvery === 0)) {
      opts.onEpoch(epoch, epochLoss);
    }
  }
  if (opts.lossCsvPath) {
    fs.writeFileSync(opts.lossCsvPath, lossLines.join("\n") + "\n");
  }
  return losses;
}
