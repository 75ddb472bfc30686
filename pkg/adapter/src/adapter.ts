/** Adapter entry: image pair in, interchange file out, exit code back.
 *
 * Invocation contract: `adapter <image_a> <image_b> <out> [--config <path>]`.
 * On any failure the process exits 1 with a diagnostic on stderr and leaves
 * no output file; emission is write-temp-then-rename so a killed or timed-out
 * run can never be parsed as a partial file.
 */
import * as fs from 'fs';
import * as path from 'path';
import { basename } from 'path';

import { filterInBounds, formatInterchange, truncateByConfidence } from './interchange';
import { AdapterConfig, DEFAULT_CONFIG, matchImages, validateConfig } from './matcher';
import { readPgm } from './pgm';

export function loadConfig(configPath?: string): AdapterConfig {
  if (!configPath) return { ...DEFAULT_CONFIG };
  const raw = JSON.parse(fs.readFileSync(configPath, 'utf-8'));
  const config: AdapterConfig = { ...DEFAULT_CONFIG, ...raw };
  validateConfig(config);
  return config;
}

function frameToken(imagePath: string, index: number): string {
  const stem = basename(imagePath).replace(/\.[^.]*$/, '').replace(/\s+/g, '_');
  const numeric = Number(stem);
  if (Number.isInteger(numeric) && numeric >= 0) {
    return `${stem}:${index}`;
  }
  return `${stem || 'frame'}:${index}`;
}

export function runAdapter(
  imageA: string,
  imageB: string,
  outPath: string,
  config: AdapterConfig = DEFAULT_CONFIG,
): number {
  try {
    validateConfig(config);
    const a = readPgm(imageA);
    const b = readPgm(imageB);
    let rows = matchImages(a, b, config);
    rows = rows.filter((r) => r.confidence >= config.confidenceFloor);
    rows = filterInBounds(rows, a.width, a.height, b.width, b.height);
    rows = truncateByConfidence(rows, config.maxMatches);
    const text = formatInterchange(frameToken(imageA, 0), frameToken(imageB, 1), rows);
    const tmp = path.join(
      path.dirname(path.resolve(outPath)),
      `.${path.basename(outPath)}.${process.pid}.tmp`,
    );
    fs.writeFileSync(tmp, text, 'utf-8');
    fs.renameSync(tmp, outPath);
    return 0;
  } catch (err) {
    process.stderr.write(`adapter: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}
