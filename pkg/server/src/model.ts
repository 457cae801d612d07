/**
 * Analytic Gaussian-mixture denoiser on the variance-preserving linear
 * schedule. For data drawn from sum_j w_j N(mu_j, s^2 I) the marginal at time
 * t is sum_j w_j N(alpha mu_j, (alpha^2 s^2 + sigma^2) I), so the ideal noise
 * prediction is the posterior-weighted mean pulled through
 *
 *     eps(x, t) = sigma * (x - alpha * E[mu | x]) / (alpha^2 s^2 + sigma^2)
 *
 * The arithmetic deliberately follows the client's reference implementation
 * operation for operation: responses travel as float32, and keeping the
 * float64 evaluation order identical makes the served values round to the
 * same bits on both sides.
 */

import type { WireParam } from "./protocol.js";

// evaluation failures (bad t, non-finite state) map to wire status 4
export class EvaluationError extends Error {}

const RANGE_TOL = 1e-12;

export class VpLinearSchedule {
  constructor(
    readonly beta0 = 0.1,
    readonly beta1 = 20.0,
    readonly tStart = 1.0,
    readonly tEnd = 1e-3
  ) {
    if (!(0 < tEnd && tEnd < tStart && tStart <= 1)) {
      throw new Error(`need 0 < t_end < t_start <= 1, got [${tEnd}, ${tStart}]`);
    }
    if (!(0 < beta0 && beta0 < beta1)) {
      throw new Error(`need 0 < beta0 < beta1, got ${beta0}, ${beta1}`);
    }
  }

  /** (alpha_t, sigma_t) with alpha^2 + sigma^2 = 1. */
  alphaSigma(t: number): [number, number] {
    if (!Number.isFinite(t) || t < this.tEnd - RANGE_TOL || t > this.tStart + RANGE_TOL) {
      throw new EvaluationError(`t outside [${this.tEnd}, ${this.tStart}]: ${t}`);
    }
    const tt = Math.min(Math.max(t, this.tEnd), this.tStart);
    const la = -0.25 * tt * tt * (this.beta1 - this.beta0) - 0.5 * tt * this.beta0;
    const alpha = Math.exp(la);
    const sigma = Math.sqrt(-Math.expm1(2.0 * la));
    return [alpha, sigma];
  }
}

export class GmmDenoiser {
  readonly dim: number;
  private readonly logWeights: number[];

  constructor(
    readonly schedule: VpLinearSchedule,
    readonly means: number[][],
    weights: number[],
    readonly scale: number
  ) {
    if (means.length === 0 || means.length !== weights.length) {
      throw new Error("means must be (J, d) with one weight per component");
    }
    this.dim = means[0].length;
    if (this.dim < 1 || means.some((m) => m.length !== this.dim)) {
      throw new Error("mixture components must share one dimension");
    }
    const total = weights.reduce((a, w) => a + w, 0);
    if (weights.some((w) => w <= 0) || Math.abs(total - 1.0) > 1e-9) {
      throw new Error("weights must be positive and sum to 1");
    }
    if (!(scale > 0)) {
      throw new Error(`scale must be positive, got ${scale}`);
    }
    this.logWeights = weights.map((w) => Math.log(w / total));
  }

  /** Noise prediction for a row-major (batch, dim) state. */
  epsilon(x: Float64Array, batch: number, t: number): Float64Array {
    for (let i = 0; i < x.length; i++) {
      if (!Number.isFinite(x[i])) throw new EvaluationError(`non-finite state at index ${i}`);
    }
    const [alpha, sigma] = this.schedule.alphaSigma(t);
    const c2 = alpha * alpha * this.scale * this.scale + sigma * sigma;
    const nj = this.means.length;
    const out = new Float64Array(batch * this.dim);
    const logp = new Float64Array(nj);
    const pm = new Float64Array(this.dim);
    for (let b = 0; b < batch; b++) {
      for (let j = 0; j < nj; j++) {
        let s = 0.0;
        for (let d = 0; d < this.dim; d++) {
          const diff = x[b * this.dim + d] - alpha * this.means[j][d];
          s += diff * diff;
        }
        logp[j] = this.logWeights[j] - (0.5 * s) / c2;
      }
      let top = -Infinity;
      for (let j = 0; j < nj; j++) top = Math.max(top, logp[j]);
      let norm = 0.0;
      for (let j = 0; j < nj; j++) {
        logp[j] = Math.exp(logp[j] - top);
        norm += logp[j];
      }
      pm.fill(0.0);
      for (let j = 0; j < nj; j++) {
        const p = logp[j] / norm;
        for (let d = 0; d < this.dim; d++) pm[d] += p * this.means[j][d];
      }
      for (let d = 0; d < this.dim; d++) {
        out[b * this.dim + d] = (sigma * (x[b * this.dim + d] - alpha * pm[d])) / c2;
      }
    }
    return out;
  }
}

/** Re-express a noise prediction in the wire parameterization the request asked for. */
export function fromEpsilon(
  eps: Float64Array,
  x: Float64Array,
  schedule: VpLinearSchedule,
  t: number,
  target: WireParam
): Float64Array {
  if (target === "eps") return eps;
  const [alpha, sigma] = schedule.alphaSigma(t);
  const out = new Float64Array(eps.length);
  if (target === "x0") {
    for (let i = 0; i < eps.length; i++) out[i] = (x[i] - sigma * eps[i]) / alpha;
  } else {
    for (let i = 0; i < eps.length; i++) {
      const x0 = (x[i] - sigma * eps[i]) / alpha;
      out[i] = alpha * eps[i] - sigma * x0;
    }
  }
  return out;
}
