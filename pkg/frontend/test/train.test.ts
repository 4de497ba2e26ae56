import { describe, expect, it } from "vitest";
import { LinkSample } from "../src/data.js";
import { ChannelEstimator } from "../src/model.js";
import { mulberry32, gaussian } from "../src/tensor.js";
import { evaluateMse, train } from "../src/train.js";

function syntheticSamples(model: ChannelEstimator, n: number, seed: number): LinkSample[] {
  // targets are a fixed linear function of smooth random inputs, so a small
  // network can drive the loss far down
  const g = gaussian(mulberry32(seed));
  const { K, T } = model.cfg;
  const fdB = model.fdB;
  const out: LinkSample[] = [];
  for (let i = 0; i < n; i++) {
    const maps = new Float32Array(2 * fdB * T).map(() => g() * 0.5);
    const attIn = new Float32Array(3 * T).map(() => g() * 0.5);
    const targetRe = new Float32Array(K * T);
    const targetIm = new Float32Array(K * T);
    for (let k = 0; k < K; k++) {
      const b = Math.floor(k / model.cfg.L1);
      for (let t = 0; t < T; t++) {
        targetRe[k * T + t] = maps[b * T + t];
        targetIm[k * T + t] = maps[fdB * T + b * T + t];
      }
    }
    out.push({ maps, attIn, targetRe, targetIm });
  }
  return out;
}

describe("training", () => {
  it("overfits a tiny dataset", () => {
    const model = new ChannelEstimator({
      K: 6, T: 4, L1: 3, L2: 2, C: 4, F: 3, Nh1: 4, Nh2: 8, seed: 5,
    });
    const samples = syntheticSamples(model, 32, 17);
    const initial = evaluateMse(model, samples);
    const losses = train(model, samples, {
      epochs: 200, batchSize: 16, lr: 0.003, shuffleSeed: 3,
    });
    const final = evaluateMse(model, samples);
    expect(final).toBeLessThan(0.1 * initial);
    expect(losses.length).toBe(200);
  });

  it("rejects an empty training set", () => {
    const model = new ChannelEstimator({
      K: 6, T: 4, L1: 3, L2: 2, C: 4, F: 3, Nh1: 4, Nh2: 8, seed: 5,
    });
    expect(() => train(model, [], { epochs: 1, batchSize: 4, lr: 1e-3, shuffleSeed: 0 }))
      .toThrow(/empty/);
  });

  it("aborts on a non-finite loss with diagnostics", () => {
    const model = new ChannelEstimator({
      K: 6, T: 4, L1: 3, L2: 2, C: 4, F: 3, Nh1: 4, Nh2: 8, seed: 5,
    });
    const samples = syntheticSamples(model, 8, 1);
    samples[0].targetRe[0] = Number.POSITIVE_INFINITY;
    expect(() => train(model, samples, { epochs: 1, batchSize: 8, lr: 1e-3, shuffleSeed: 0 }))
      .toThrow(/non-finite/);
  });

  it("writes a loss history csv", async () => {
    const fs = await import("node:fs");
    const os = await import("node:os");
    const path = await import("node:path");
    const model = new ChannelEstimator({
      K: 6, T: 4, L1: 3, L2: 2, C: 4, F: 3, Nh1: 4, Nh2: 8, seed: 5,
    });
    const samples = syntheticSamples(model, 8, 2);
    const file = path.join(fs.mkdtempSync(path.join(os.tmpdir(), "sipdl-")), "loss.csv");
    train(model, samples, { epochs: 3, batchSize: 8, lr: 1e-3, shuffleSeed: 0,
                            lossCsvPath: file });
    const lines = fs.readFileSync(file, "utf8").trim().split("\n");
    expect(lines[0]).toBe("epoch,loss");
    expect(lines.length).toBe(4);
  });
});
