// Client-side homogeneity preview over the rendered preview's RGBA
// pixels. It mirrors the server's criterion (max per-channel coefficient
// of variation below 0.05) so obviously bad selections get caught before
// a round trip; the server re-checks on the raw data either way.

import type { Patch } from "./geometry.js";

export const CV_THRESHOLD = 0.05;

export interface HomogeneityResult {
  cv: number;
  pass: boolean;
}

/**
 * Coefficient of variation of the patch window, worst channel of the
 * first three (alpha ignored). `pixels` is RGBA row-major as produced by
 * CanvasRenderingContext2D.getImageData.
 */
export function homogeneityPreview(
  pixels: Uint8ClampedArray,
  imageWidth: number,
  patch: Patch,
): HomogeneityResult {
  let worst = 0;
  for (let c = 0; c < 3; c++) {
    let sum = 0;
    let sumSq = 0;
    const n = patch.size * patch.size;
    for (let dy = 0; dy < patch.size; dy++) {
      for (let dx = 0; dx < patch.size; dx++) {
        const v = pixels[4 * ((patch.y + dy) * imageWidth + patch.x + dx) + c];
        sum += v;
        sumSq += v * v;
      }
    }
    const mean = sum / n;
    const variance = Math.max(0, sumSq / n - mean * mean);
    const cv = mean > 1e-9 ? Math.sqrt(variance) / mean : Infinity;
    worst = Math.max(worst, cv);
  }
  return { cv: worst, pass: worst < CV_THRESHOLD };
}
