/** Shared test fixtures: tiny PPM images and a hand-written manifest. */

import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { RgbImage, writePpm } from '../src/image.js';

export function makeTempDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'exporter-test-'));
}

/** Deterministic gradient image so different crops pool to different stats. */
export function gradientImage(width: number, height: number, phase = 0): RgbImage {
  const data = new Uint8Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const k = (y * width + x) * 3;
      data[k] = (x * 17 + phase) % 256;
      data[k + 1] = (y * 29 + phase * 3) % 256;
      data[k + 2] = (x * 5 + y * 11 + phase * 7) % 256;
    }
  }
  return { width, height, data };
}

export function solidImage(width: number, height: number, rgb: [number, number, number]): RgbImage {
  const data = new Uint8Array(width * height * 3);
  for (let k = 0; k < width * height; k++) {
    data.set(rgb, k * 3);
  }
  return { width, height, data };
}

export interface TestWorld {
  dir: string;
  manifestPath: string;
  imagesRoot: string;
  sampleCount: number;
  classNames: string[];
}

/**
 * Three samples over two images, deliberately interleaved so per-image
 * ordinal keys (street#0, plaza#0, street#1) exercise manifest order.
 */
export function makeTestWorld(dir: string, cropSize = 8): TestWorld {
  const imagesRoot = path.join(dir, 'images');
  fs.mkdirSync(imagesRoot, { recursive: true });
  writePpm(path.join(imagesRoot, 'street.ppm'), gradientImage(24, 18));
  writePpm(path.join(imagesRoot, 'plaza.ppm'), gradientImage(16, 16, 101));

  const classNames = ['cat', 'dog', 'bird'];
  const manifest = {
    config: { n_max: 10, tau_conf: 0.5, crop_size: cropSize },
    vocab: { names: classNames, base_ids: [0, 1], novel_ids: [2] },
    samples: [
      { image_id: 'street', bbox: [1.0, 2.0, 13.0, 14.0], label: 'cat', score: 0.9 },
      { image_id: 'plaza', bbox: [0.0, 0.0, 16.0, 16.0], label: 'dog', score: 0.8 },
      { image_id: 'street', bbox: [8.5, 3.5, 20.0, 17.0], label: 'cat', score: 0.7 },
    ],
    provenance: {},
  };
  const manifestPath = path.join(dir, 'manifest.json');
  fs.writeFileSync(manifestPath, JSON.stringify(manifest));
  return { dir, manifestPath, imagesRoot, sampleCount: manifest.samples.length, classNames };
}
