/** Adam optimizer over a flat parameter list. */

import { Param } from "./layers.js";

export class Adam {
  private m: Float32Array[];
  private v: Float32Array[];
  private t = 0;

  constructor(private params: Param[], private lr = 0.001,
              private beta1 = 0.9, private beta2 = 0.999,
              private eps = 1e-8) {
    this.m = params.map((p) => new Float32Array(p.value.length));
    this.v = params.map((p) => new Float32Array(p.value.length));
  }

  step(): void {
    this.t += 1;
    const c1 = 1.0 - Math.pow(this.beta1, this.t);
    const c2 = 1.0 - Math.pow(this.beta2, this.t);
    for (let i = 0; i < this.params.length; i++) {
      const p = this.params[i];
      const m = this.m[i];
      const v = this.v[i];
      for (let j = 0; j < p.value.length; j++) {
        const g = p.grad[j];
        m[j] = this.beta1 * m[j] + (1 - this.beta1) * g;
        v[j] = this.beta2 * v[j] + (1 - this.beta2) * g * g;
        p.value[j] -= this.lr * (m[j] / c1) / (Math.sqrt(v[j] / c2) + this.eps);
      }
    }
  }
}
