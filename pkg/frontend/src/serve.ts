/**
 * File-protocol inference: read a request bundle, run the estimator (or the
 * deterministic despread-and-upsample identity stub), write the response.
 * The response file is only created after a fully successful run.
 */

import { buildAttentionInput, buildMaps } from "./data.js";
import { despread, upsampleFrequency } from "./despread.js";
import { ChannelEstimator } from "./model.js";
import { readTensors, WireFormatError, writeTensors } from "./wire.js";

export interface ServeOptions {
  requestPath: string;
  responsePath: string;
  ckptPath?: string;
  identityStub: boolean;
  L1: number;
  L2: number;
}

interface Request {
  nR: number;
  nT: number;
  K: number;
  T: number;
  ls: Float32Array;    // (2, N_r, N_t, K, T) C-order
  conf: Float32Array;  // (N_t, K, T)
}

function parseRequest(path: string): Request {
  const tensors = readTensors(path);
  if (tensors.length !== 3) {
    throw new WireFormatError(`expected 3 request tensors, got ${tensors.length}`);
  }
  const [ls, conf, sigma] = tensors;
  if (ls.dims.length !== 5 || ls.dims[0] !== 2) {
    throw new WireFormatError(`estimate tensor must be (2,N_r,N_t,K,T), got ${ls.dims}`);
  }
  const [, nR, nT, K, T] = ls.dims;
  if (conf.dims.length !== 3 || conf.dims[0] !== nT || conf.dims[1] !== K || conf.dims[2] !== T) {
    throw new WireFormatError(`confidence tensor must be (${nT},${K},${T}), got ${conf.dims}`);
  }
  if (sigma.dims.length !== 1 || sigma.dims[0] !== 1) {
    throw new WireFormatError(`noise tensor must have shape (1), got ${sigma.dims}`);
  }
  return { nR, nT, K, T, ls: ls.data, conf: conf.data };
}

export function handleServe(opts: ServeOptions): void {
  const req = parseRequest(opts.requestPath);
  const { nR, nT, K, T } = req;
  const grid = K * T;
  const links = nR * nT;
  const out = new Float32Array(2 * links * grid);

  let model: ChannelEstimator | null = null;
  if (!opts.identityStub) {
    if (!opts.ckptPath) {
      throw new Error("serve needs --ckpt or --identity-stub");
    }
    model = ChannelEstimator.load(opts.ckptPath);
    if (model.cfg.K !== K || model.cfg.T !== T) {
      throw new WireFormatError(
        `checkpoint geometry (K=${model.cfg.K}, T=${model.cfg.T}) does not match ` +
        `request (K=${K}, T=${T})`);
    }
  } else if (K % opts.L1 !== 0) {
    throw new WireFormatError(`identity stub needs L1=${opts.L1} dividing K=${K}`);
  }

  for (let m = 0; m < nR; m++) {
    for (let n = 0; n < nT; n++) {
      const l = m * nT + n;
      const lsRe = req.ls.subarray(l * grid, (l + 1) * grid);
      const lsIm = req.ls.subarray((links + l) * grid, (links + l + 1) * grid);
      let re: Float32Array;
      let im: Float32Array;
      if (model) {
        const conf = req.conf.subarray(n * grid, (n + 1) * grid);
        const cache = model.forward(buildMaps(lsRe, lsIm, K, T, model.cfg.L1, model.cfg.L2),
                                    buildAttentionInput(lsRe, lsIm, conf, K, T));
        ({ re, im } = model.outputToGrid(cache.out));
      } else {
        const fdB = K / opts.L1;
        re = upsampleFrequency(despread(lsRe, K, T, opts.L1, opts.L2), fdB, T, opts.L1);
        im = upsampleFrequency(despread(lsIm, K, T, opts.L1, opts.L2), fdB, T, opts.L1);
      }
      out.set(re, l * grid);
      out.set(im, (links + l) * grid);
    }
  }
  writeTensors(opts.responsePath, [{ dims: [2, nR, nT, K, T], data: out }]);
}
