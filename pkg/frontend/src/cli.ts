/**
 * Command line: `train` fits a checkpoint from a dataset file, `serve`
 * answers one tensor-file request (trained model or identity stub).
 * Exit codes: 0 success, 1 usage error, 2 runtime failure.
 */

import { parseArgs } from "node:util";
import { linkSamples } from "./data.js";
import { ChannelEstimator, DEFAULT_HYPERS } from "./model.js";
import { handleServe } from "./serve.js";
import { train } from "./train.js";
import { readDataset } from "./wire.js";

function usage(): void {
  console.error(
    "usage: cli train --dataset <file> --out <ckpt> [--epochs N] [--batch N]\n" +
    "                 [--lr X] [--seed N] [--l1 N] [--l2 N]\n" +
    "       cli serve (--ckpt <ckpt> | --identity-stub) --request <file>\n" +
    "                 --response <file> [--l1 N] [--l2 N]");
}

function cmdTrain(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: "string" },
      out: { type: "string" },
      epochs: { type: "string", default: "100" },
      batch: { type: "string", default: "128" },
      lr: { type: "string", default: "0.001" },
      seed: { type: "string", default: "1" },
      l1: { type: "string", default: String(DEFAULT_HYPERS.L1) },
      l2: { type: "string", default: String(DEFAULT_HYPERS.L2) },
    },
  });
  if (!values.dataset || !values.out) {
    usage();
    return 1;
  }
  const ds = readDataset(values.dataset);
  const L1 = parseInt(values.l1!, 10);
  const L2 = parseInt(values.l2!, 10);
  const samples = linkSamples(ds, L1, L2);
  const model = new ChannelEstimator({
    K: ds.K, T: ds.T, L1, L2,
    C: DEFAULT_HYPERS.C, F: DEFAULT_HYPERS.F,
    Nh1: DEFAULT_HYPERS.Nh1, Nh2: DEFAULT_HYPERS.Nh2,
    seed: parseInt(values.seed!, 10),
  });
  console.error(`training on ${samples.length} link samples ` +
                `(K=${ds.K}, T=${ds.T}, ${model.paramCount()} parameters)`);
  const losses = train(model, samples, {
    epochs: parseInt(values.epochs!, 10),
    batchSize: parseInt(values.batch!, 10),
    lr: parseFloat(values.lr!),
    shuffleSeed: 1234,
    lossCsvPath: `${values.out}.loss.csv`,
    logEvery: 10,
    onEpoch: (e, l) => console.error(`epoch ${e}: loss ${l.toExponential(4)}`),
  });
  model.save(values.out);
  console.error(`final loss ${losses[losses.length - 1].toExponential(4)}, ` +
                `checkpoint written to ${values.out}`);
  return 0;
}

function cmdServe(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      ckpt: { type: "string" },
      request: { type: "string" },
      response: { type: "string" },
      "identity-stub": { type: "boolean", default: false },
      l1: { type: "string", default: String(DEFAULT_HYPERS.L1) },
      l2: { type: "string", default: String(DEFAULT_HYPERS.L2) },
    },
  });
  if (!values.request || !values.response || (!values.ckpt && !values["identity-stub"])) {
    usage();
    return 1;
  }
  handleServe({
    requestPath: values.request,
    responsePath: values.response,
    ckptPath: values.ckpt,
    identityStub: values["identity-stub"]!,
    L1: parseInt(values.l1!, 10),
    L2: parseInt(values.l2!, 10),
  });
  return 0;
}

export function main(argv: string[]): number {
  const [cmd, ...rest] = argv;
  try {
    if (cmd === "train") {
      return cmdTrain(rest);
    }
    if (cmd === "serve") {
      return cmdServe(rest);
    }
    usage();
    return 1;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

process.exit(main(process.argv.slice(2)));
