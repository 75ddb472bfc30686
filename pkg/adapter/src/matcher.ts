/** The wrapped matcher: a deterministic corner + patch mutual-NN model.
 *
 * Stands in for a learned matcher behind the adapter protocol; real models
 * plug in by implementing the same match() signature.
 */
import { GrayImage } from './pgm';
import { MatchRow } from './interchange';

export interface AdapterConfig {
  modelName: string;
  weightsPath?: string;
  device: string;
  maxMatches: number;
  confidenceFloor: number;
  /** Detector knobs of the built-in model. */
  maxKeypoints: number;
  patchSize: number;
  ratioTest: number;
}

export const DEFAULT_CONFIG: AdapterConfig = {
  modelName: 'corner-mnn',
  device: 'cpu',
  maxMatches: 5000,
  confidenceFloor: 0.0,
  maxKeypoints: 512,
  patchSize: 9,
  ratioTest: 0.95,
};

export function validateConfig(config: AdapterConfig): void {
  if (!(config.maxMatches > 0)) {
    throw new Error(`maxMatches must be positive, got ${config.maxMatches}`);
  }
  if (!(config.confidenceFloor >= 0 && config.confidenceFloor <= 1)) {
    throw new Error(`confidenceFloor must be in [0, 1], got ${config.confidenceFloor}`);
  }
}

interface Keypoint {
  x: number;
  y: number;
  score: number;
}

function cornerResponse(image: GrayImage): Float64Array {
  const { width: w, height: h, pixels } = image;
  const gx = new Float64Array(w * h);
  const gy = new Float64Array(w * h);
  for (let y = 1; y < h - 1; y++) {
    for (let x = 1; x < w - 1; x++) {
      const i = y * w + x;
      gx[i] = (pixels[i + 1] - pixels[i - 1]) / 2;
      gy[i] = (pixels[i + w] - pixels[i - w]) / 2;
    }
  }
  // 3x3 box-smoothed structure tensor, Harris score with k = 0.04
  const resp = new Float64Array(w * h);
  for (let y = 2; y < h - 2; y++) {
    for (let x = 2; x < w - 2; x++) {
      let sxx = 0;
      let syy = 0;
      let sxy = 0;
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          const i = (y + dy) * w + (x + dx);
          sxx += gx[i] * gx[i];
          syy += gy[i] * gy[i];
          sxy += gx[i] * gy[i];
        }
      }
      const trace = sxx + syy;
      resp[y * w + x] = sxx * syy - sxy * sxy - 0.04 * trace * trace;
    }
  }
  return resp;
}

function detectKeypoints(image: GrayImage, config: AdapterConfig): Keypoint[] {
  const { width: w, height: h } = image;
  const resp = cornerResponse(image);
  let peak = 0;
  for (const v of resp) if (v > peak) peak = v;
  if (peak <= 0) return [];
  const threshold = 0.01 * peak;
  const border = Math.floor(config.patchSize / 2) + 1;
  const radius = 3;
  const found: Keypoint[] = [];
  for (let y = border; y < h - border; y++) {
    for (let x = border; x < w - border; x++) {
      const v = resp[y * w + x];
      if (v < threshold) continue;
      let isMax = true;
      for (let dy = -radius; dy <= radius && isMax; dy++) {
        for (let dx = -radius; dx <= radius; dx++) {
          if (resp[(y + dy) * w + (x + dx)] > v) {
            isMax = false;
            break;
          }
        }
      }
      if (isMax) found.push({ x, y, score: v });
    }
  }
  found.sort((a, b) => b.score - a.score || a.y - b.y || a.x - b.x);
  return found.slice(0, config.maxKeypoints);
}

function describe(image: GrayImage, keypoints: Keypoint[], patchSize: number) {
  const r = Math.floor(patchSize / 2);
  const dim = patchSize * patchSize;
  const kept: Keypoint[] = [];
  const descriptors: Float64Array[] = [];
  for (const kp of keypoints) {
    const vec = new Float64Array(dim);
    let mean = 0;
    let idx = 0;
    for (let dy = -r; dy <= r; dy++) {
      for (let dx = -r; dx <= r; dx++) {
        const v = image.pixels[(kp.y + dy) * image.width + (kp.x + dx)];
        vec[idx++] = v;
        mean += v;
      }
    }
    mean /= dim;
    let norm = 0;
    for (let i = 0; i < dim; i++) {
      vec[i] -= mean;
      norm += vec[i] * vec[i];
    }
    norm = Math.sqrt(norm);
    if (norm < 1e-9) continue; // flat patch
    for (let i = 0; i < dim; i++) vec[i] /= norm;
    kept.push(kp);
    descriptors.push(vec);
  }
  return { kept, descriptors };
}

function distance(a: Float64Array, b: Float64Array): number {
  let dot = 0;
  for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
  const d2 = Math.max(0, 2 - 2 * dot);
  return Math.sqrt(d2);
}

/** Mutual nearest neighbors under the ratio test; confidence = 1 - ratio. */
export function matchImages(
  imageA: GrayImage,
  imageB: GrayImage,
  config: AdapterConfig = DEFAULT_CONFIG,
): MatchRow[] {
  const a = describe(imageA, detectKeypoints(imageA, config), config.patchSize);
  const b = describe(imageB, detectKeypoints(imageB, config), config.patchSize);
  if (a.kept.length === 0 || b.kept.length === 0) return [];
  const nearestOfA: number[] = [];
  const ratios: number[] = [];
  for (const da of a.descriptors) {
    let best = Infinity;
    let second = Infinity;
    let bestJ = -1;
    for (let j = 0; j < b.descriptors.length; j++) {
      const d = distance(da, b.descriptors[j]);
      if (d < best) {
        second = best;
        best = d;
        bestJ = j;
      } else if (d < second) {
        second = d;
      }
    }
    nearestOfA.push(bestJ);
    ratios.push(second < 1e-12 ? 1 : second === Infinity ? 0 : best / second);
  }
  const nearestOfB: number[] = [];
  for (const db of b.descriptors) {
    let best = Infinity;
    let bestI = -1;
    for (let i = 0; i < a.descriptors.length; i++) {
      const d = distance(a.descriptors[i], db);
      if (d < best) {
        best = d;
        bestI = i;
      }
    }
    nearestOfB.push(bestI);
  }
  const rows: MatchRow[] = [];
  for (let i = 0; i < a.kept.length; i++) {
    const j = nearestOfA[i];
    if (j < 0 || nearestOfB[j] !== i) continue;
    if (ratios[i] >= config.ratioTest) continue;
    rows.push({
      xa: a.kept[i].x,
      ya: a.kept[i].y,
      xb: b.kept[j].x,
      yb: b.kept[j].y,
      confidence: 1 - ratios[i],
      source: config.modelName,
    });
  }
  return rows;
}
