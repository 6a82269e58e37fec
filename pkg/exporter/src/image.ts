/**
 * Minimal raster handling: binary PPM (P6) input and bilinear region resize.
 *
 * PPM keeps the exporter dependency-free; any image collection can be
 * converted once with standard tools (e.g. ImageMagick's `convert`).
 */

import * as fs from 'node:fs';

import type { Box } from './manifest.js';

export interface RgbImage {
  width: number;
  height: number;
  /** Interleaved RGB bytes, width*height*3 entries. */
  data: Uint8Array;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

/** Skip whitespace and '#' comment lines, then read one header token. */
function nextToken(buf: Buffer, pos: number): { token: string; pos: number } {
  while (pos < buf.length) {
    if (WHITESPACE.has(buf[pos])) {
      pos++;
    } else if (buf[pos] === 0x23) { // '#'
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < buf.length && !WHITESPACE.has(buf[pos])) pos++;
  if (pos === start) {
    throw new Error('unexpected end of PPM header');
  }
  return { token: buf.subarray(start, pos).toString('ascii'), pos };
}

export function decodePpm(buf: Buffer): RgbImage {
  let cursor = 0;
  const magic = nextToken(buf, cursor);
  if (magic.token !== 'P6') {
    throw new Error(`not a binary PPM (magic ${JSON.stringify(magic.token)})`);
  }
  const w = nextToken(buf, magic.pos);
  const h = nextToken(buf, w.pos);
  const maxval = nextToken(buf, h.pos);
  const width = Number(w.token);
  const height = Number(h.token);
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad PPM dimensions ${w.token}x${h.token}`);
  }
  if (maxval.token !== '255') {
    throw new Error(`unsupported PPM maxval ${maxval.token}`);
  }
  // Exactly one whitespace byte separates the header from the pixel payload.
  const start = maxval.pos + 1;
  const expect = width * height * 3;
  if (buf.length - start < expect) {
    throw new Error(`truncated PPM payload: ${buf.length - start} bytes for ${expect}`);
  }
  return { width, height, data: new Uint8Array(buf.subarray(start, start + expect)) };
}

export function readPpm(path: string): RgbImage {
  return decodePpm(fs.readFileSync(path));
}

export function encodePpm(img: RgbImage): Buffer {
  if (img.data.length !== img.width * img.height * 3) {
    throw new Error(`pixel buffer length ${img.data.length} != ${img.width}x${img.height}x3`);
  }
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii');
  return Buffer.concat([header, Buffer.from(img.data)]);
}

export function writePpm(path: string, img: RgbImage): void {
  fs.writeFileSync(path, encodePpm(img));
}

function samplePlane(img: RgbImage, x: number, y: number, c: number): number {
  return img.data[(y * img.width + x) * 3 + c];
}

/**
 * Crop a box out of an image and resize it to size x size with bilinear
 * interpolation.  Output pixels sample the box on a half-pixel grid, i.e.
 * output index i maps to source coordinate x_min + (i + 0.5) * w / size - 0.5,
 * clamped to the image.  Returns interleaved RGB floats in [0, 1].
 */
export function cropResizeBilinear(img: RgbImage, box: Box, size: number): Float32Array {
  if (size < 1) {
    throw new Error(`crop size must be >= 1, got ${size}`);
  }
  const [x0, y0, x1, y1] = box;
  const boxW = x1 - x0;
  const boxH = y1 - y0;
  const out = new Float32Array(size * size * 3);
  for (let i = 0; i < size; i++) {
    let sy = y0 + ((i + 0.5) * boxH) / size - 0.5;
    sy = Math.min(Math.max(sy, 0), img.height - 1);
    const yLo = Math.floor(sy);
    const yHi = Math.min(yLo + 1, img.height - 1);
    const fy = sy - yLo;
    for (let j = 0; j < size; j++) {
      let sx = x0 + ((j + 0.5) * boxW) / size - 0.5;
      sx = Math.min(Math.max(sx, 0), img.width - 1);
      const xLo = Math.floor(sx);
      const xHi = Math.min(xLo + 1, img.width - 1);
      const fx = sx - xLo;
      for (let c = 0; c < 3; c++) {
        const top = (1 - fx) * samplePlane(img, xLo, yLo, c) + fx * samplePlane(img, xHi, yLo, c);
        const bottom = (1 - fx) * samplePlane(img, xLo, yHi, c) + fx * samplePlane(img, xHi, yHi, c);
        out[(i * size + j) * 3 + c] = ((1 - fy) * top + fy * bottom) / 255;
      }
    }
  }
  return out;
}
