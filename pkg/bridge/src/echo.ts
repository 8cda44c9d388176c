/**
 * Echo model: a dependency-free test double for protocol conformance.
 *
 * Returns sigmoid(gamma * exp(-d^2 / 2 sigma^2)) around the first positive
 * point, ignoring the image content. Peak value at the point itself is
 * sigmoid(gamma) ~= 0.982 with the default gains.
 */

import { DecodedImage, PromptRecord, ProtocolError } from "./protocol";

export const SIGMA = 12;
export const GAMMA = 4;

export interface Model {
  readonly name: string;
  predict(image: DecodedImage, points: PromptRecord[]): Float32Array;
}

function sigmoid(z: number): number {
  return z >= 0 ? 1 / (1 + Math.exp(-z)) : Math.exp(z) / (1 + Math.exp(z));
}

export class EchoModel implements Model {
  readonly name = "echo";

  predict(image: DecodedImage, points: PromptRecord[]): Float32Array {
    const anchor = points.find((p) => p.label === 1);
    if (anchor === undefined) {
      throw new ProtocolError("no positive points");
    }
    const { w, h } = image;
    const twoSigma2 = 2 * SIGMA * SIGMA;
    const out = new Float32Array(w * h);
    for (let y = 0; y < h; y++) {
      const dy2 = (y - anchor.y) * (y - anchor.y);
      for (let x = 0; x < w; x++) {
        const dx2 = (x - anchor.x) * (x - anchor.x);
        out[y * w + x] = sigmoid(GAMMA * Math.exp(-(dx2 + dy2) / twoSigma2));
      }
    }
    return out;
  }
}
