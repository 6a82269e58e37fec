/**
 * Reader for region-dataset manifests produced by the regionadapt builder.
 *
 * A manifest is a JSON document:
 *
 *   {
 *     "config":  {"n_max": ..., "tau_conf": ..., "crop_size": ...},
 *     "vocab":   {"names": [...], "base_ids": [...], "novel_ids": [...]},
 *     "samples": [{"image_id": ..., "bbox": [x0, y0, x1, y1],
 *                  "label": ..., "score": ...}, ...],
 *     "provenance": {...}
 *   }
 *
 * Sample order is significant: embedding tables exported for a manifest put
 * row k against sample k, and the ids follow the same "<image_id>#<ordinal>"
 * convention the Python side uses.
 */

import * as fs from 'node:fs';

export type Box = [number, number, number, number]; // x_min, y_min, x_max, y_max

export interface ManifestSample {
  imageId: string;
  bbox: Box;
  label: string;
  score: number;
}

export interface Manifest {
  cropSize: number;
  classNames: string[];
  baseIds: number[];
  novelIds: number[];
  samples: ManifestSample[];
}

function fail(path: string, why: string): never {
  throw new Error(`invalid manifest ${path}: ${why}`);
}

export function readManifest(path: string): Manifest {
  let doc: any;
  try {
    doc = JSON.parse(fs.readFileSync(path, 'utf-8'));
  } catch (e) {
    fail(path, `${(e as Error).message}`);
  }
  if (typeof doc !== 'object' || doc === null) {
    fail(path, 'top level is not an object');
  }
  const { config, vocab, samples } = doc;
  if (!config || !Number.isInteger(config.crop_size) || config.crop_size < 1) {
    fail(path, 'config.crop_size must be a positive integer');
  }
  if (!vocab || !Array.isArray(vocab.names) || vocab.names.some((n: unknown) => typeof n !== 'string')) {
    fail(path, 'vocab.names must be an array of strings');
  }
  if (!Array.isArray(samples)) {
    fail(path, 'samples must be an array');
  }
  const out: ManifestSample[] = samples.map((row: any, k: number) => {
    if (typeof row?.image_id !== 'string' || row.image_id.length === 0) {
      fail(path, `sample ${k} has no image_id`);
    }
    const bbox = row.bbox;
    if (!Array.isArray(bbox) || bbox.length !== 4 || bbox.some((v: unknown) => !Number.isFinite(v))) {
      fail(path, `sample ${k} bbox must be four finite numbers`);
    }
    if (bbox[0] > bbox[2] || bbox[1] > bbox[3]) {
      fail(path, `sample ${k} bbox corners out of order`);
    }
    if (typeof row.label !== 'string') {
      fail(path, `sample ${k} has no label`);
    }
    return {
      imageId: row.image_id,
      bbox: [bbox[0], bbox[1], bbox[2], bbox[3]],
      label: row.label,
      score: Number(row.score ?? 0),
    };
  });
  return {
    cropSize: config.crop_size,
    classNames: [...vocab.names],
    baseIds: Array.isArray(vocab.base_ids) ? vocab.base_ids.map(Number) : [],
    novelIds: Array.isArray(vocab.novel_ids) ? vocab.novel_ids.map(Number) : [],
    samples: out,
  };
}

/** Stable per-sample ids: "<image_id>#<ordinal within image>". */
export function sampleKeys(manifest: Manifest): string[] {
  const counters = new Map<string, number>();
  return manifest.samples.map(s => {
    const k = counters.get(s.imageId) ?? 0;
    counters.set(s.imageId, k + 1);
    return `${s.imageId}#${k}`;
  });
}
