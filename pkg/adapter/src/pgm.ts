/** Binary 8-bit PGM (P5) reading and writing. */
import * as fs from 'fs';

export interface GrayImage {
  width: number;
  height: number;
  /** Row-major pixels, length width * height. */
  pixels: Uint8Array;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x0c;
}

/** Read the next whitespace-delimited token, skipping # comments. */
function nextToken(data: Buffer, offset: number): { token: string; next: number } {
  let i = offset;
  for (;;) {
    while (i < data.length && isSpace(data[i])) i++;
    if (i < data.length && data[i] === 0x23 /* '#' */) {
      while (i < data.length && data[i] !== 0x0a) i++;
      continue;
    }
    break;
  }
  const start = i;
  while (i < data.length && !isSpace(data[i])) i++;
  if (start === i) throw new Error('truncated PGM header');
  return { token: data.toString('ascii', start, i), next: i };
}

export function readPgm(path: string): GrayImage {
  const data = fs.readFileSync(path);
  const magic = nextToken(data, 0);
  if (magic.token !== 'P5') {
    throw new Error(`not a binary PGM file: magic ${magic.token}`);
  }
  const w = nextToken(data, magic.next);
  const h = nextToken(data, w.next);
  const maxval = nextToken(data, h.next);
  const width = Number(w.token);
  const height = Number(h.token);
  const max = Number(maxval.token);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
    throw new Error(`bad PGM dimensions ${w.token}x${h.token}`);
  }
  if (!Number.isInteger(max) || max <= 0 || max > 255) {
    throw new Error(`only 8-bit PGM supported, maxval ${maxval.token}`);
  }
  const rasterStart = maxval.next + 1; // exactly one whitespace byte
  if (rasterStart > data.length || !isSpace(data[maxval.next])) {
    throw new Error('missing raster separator');
  }
  const expected = width * height;
  if (data.length - rasterStart !== expected) {
    throw new Error(`raster size ${data.length - rasterStart} != ${expected}`);
  }
  return {
    width,
    height,
    pixels: new Uint8Array(data.subarray(rasterStart, rasterStart + expected)),
  };
}

export function writePgm(path: string, image: GrayImage): void {
  const header = Buffer.from(`P5\n${image.width} ${image.height}\n255\n`, 'ascii');
  fs.writeFileSync(path, Buffer.concat([header, Buffer.from(image.pixels)]));
}
