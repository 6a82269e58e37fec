/**
 * Export jobs: turn a dataset manifest plus an image directory into the two
 * embedding tables the regionadapt trainer consumes — one row per region
 * sample and one row per vocabulary class.
 */

import * as path from 'node:path';

import { EmbeddingTable, makeTable, writeTable } from './date.js';
import { Manifest, readManifest, sampleKeys } from './manifest.js';
import { RgbImage, cropResizeBilinear, readPpm } from './image.js';
import {
  DEFAULT_TEMPLATES,
  encodeClass,
  encodeRegion,
  normalizeInPlace,
  parseModel,
} from './encoder.js';

export interface ExportJob {
  manifestPath: string;
  imagesRoot: string;
  /** Encoder identifier, e.g. "pixstat/64"; fixes the embedding dimension. */
  model: string;
  regionsOut: string;
  textsOut: string;
  /** L2-normalize region rows.  Class rows are always unit vectors. */
  normalize: boolean;
  /** Placement hint; the pixel-statistics encoder runs on the CPU regardless. */
  device: string;
  /** Prompt templates, each containing [CLASS] once. */
  templates?: string[];
}

function loadImage(imagesRoot: string, imageId: string): RgbImage {
  const file = path.join(imagesRoot, `${imageId}.ppm`);
  try {
    return readPpm(file);
  } catch (e) {
    throw new Error(`cannot read image '${imageId}' (${file}): ${(e as Error).message}`);
  }
}

/**
 * Region table: row k is the encoding of manifest sample k's crop, resized to
 * the manifest's crop size.  Ids follow the "<image_id>#<ordinal>" keys.
 */
export function exportRegionEmbeddings(job: ExportJob): EmbeddingTable {
  parseModel(job.model); // fail before any file I/O on a bad identifier
  const manifest = readManifest(job.manifestPath);
  const images = new Map<string, RgbImage>();
  const rows: Float64Array[] = manifest.samples.map(sample => {
    let img = images.get(sample.imageId);
    if (!img) {
      img = loadImage(job.imagesRoot, sample.imageId);
      images.set(sample.imageId, img);
    }
    const crop = cropResizeBilinear(img, sample.bbox, manifest.cropSize);
    const feature = encodeRegion(crop, manifest.cropSize, job.model);
    return job.normalize ? normalizeInPlace(feature) : feature;
  });
  const table = makeTable(rows, sampleKeys(manifest), job.normalize);
  writeTable(job.regionsOut, table);
  return table;
}

/**
 * Class table: one unit row per class, vocabulary order, each the
 * re-normalized mean of that class's prompt embeddings over the templates.
 */
export function exportTextEmbeddings(
  classNames: string[],
  templates: string[],
  model: string,
  outPath: string,
): EmbeddingTable {
  if (classNames.length === 0) {
    throw new Error('vocabulary is empty');
  }
  const rows = classNames.map(name => encodeClass(name, templates, model));
  const table = makeTable(rows, classNames, true);
  writeTable(outPath, table);
  return table;
}

export interface ExportSummary {
  regions: { path: string; rows: number; dim: number };
  texts: { path: string; rows: number; dim: number };
}

/** Run both exports for one manifest; the text rows use its vocabulary. */
export function runExport(job: ExportJob): ExportSummary {
  const templates = job.templates ?? DEFAULT_TEMPLATES;
  const regions = exportRegionEmbeddings(job);
  const manifest: Manifest = readManifest(job.manifestPath);
  const texts = exportTextEmbeddings(manifest.classNames, templates, job.model, job.textsOut);
  return {
    regions: { path: job.regionsOut, rows: regions.rows, dim: regions.dim },
    texts: { path: job.textsOut, rows: texts.rows, dim: texts.dim },
  };
}
