/**
 * Deterministic region and prompt encoders.
 *
 * Models are named "pixstat/<dim>".  The vision side pools pixel statistics
 * over a fixed grid of the resized crop and projects them with a matrix drawn
 * from a PRNG seeded by the model id; the text side hashes prompt tokens into
 * seeded unit vectors and averages them.  Everything is a pure function of
 * (model id, input), so re-running an export reproduces files bit for bit on
 * any machine — no weights to download, no GPU, no framework.
 *
 * The two sides share the embedding dimension, which is all the downstream
 * head training needs; swap in a real vision-language model by implementing
 * the same two functions against its encoders.
 */

export interface ModelSpec {
  family: string;
  dim: number;
}

/** Pooling grid for the vision descriptor: GRID*GRID cells x 3 channels. */
const GRID = 8;
/** Raw descriptor length: grid cell means + global channel means and stds. */
const RAW_DIM = GRID * GRID * 3 + 6;

export const CLASS_SLOT = '[CLASS]';
export const DEFAULT_TEMPLATES = ['a photo of a [CLASS]'];

export function parseModel(id: string): ModelSpec {
  const m = /^([a-z0-9_-]+)\/(\d+)$/.exec(id);
  if (!m) {
    throw new Error(`cannot load model '${id}': expected "<family>/<dim>"`);
  }
  if (m[1] !== 'pixstat') {
    throw new Error(`cannot load model '${id}': unknown family '${m[1]}'`);
  }
  const dim = Number(m[2]);
  if (dim < 2) {
    throw new Error(`cannot load model '${id}': dim must be >= 2`);
  }
  return { family: m[1], dim };
}

// 32-bit FNV-1a; cheap, stable across platforms, good enough to seed a PRNG.
function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Standard normal draws seeded by a string key (Box-Muller). */
function gaussians(key: string, n: number): Float64Array {
  const rand = mulberry32(fnv1a(key));
  const out = new Float64Array(n);
  for (let i = 0; i < n; i += 2) {
    const u1 = 1 - rand(); // (0, 1]
    const u2 = rand();
    const r = Math.sqrt(-2 * Math.log(u1));
    out[i] = r * Math.cos(2 * Math.PI * u2);
    if (i + 1 < n) {
      out[i + 1] = r * Math.sin(2 * Math.PI * u2);
    }
  }
  return out;
}

const projectionCache = new Map<string, Float64Array>();

/** The model's dim x RAW_DIM projection, cached per model id. */
function projectionMatrix(modelId: string, dim: number): Float64Array {
  let p = projectionCache.get(modelId);
  if (!p) {
    p = gaussians(`${modelId}|projection`, dim * RAW_DIM);
    const scale = 1 / Math.sqrt(RAW_DIM);
    for (let i = 0; i < p.length; i++) p[i] *= scale;
    projectionCache.set(modelId, p);
  }
  return p;
}

/**
 * Pool a resized crop (interleaved RGB floats, size x size) into the raw
 * descriptor: per-cell channel means over a GRID x GRID partition, then the
 * global per-channel mean and standard deviation.
 */
export function rawDescriptor(pixels: Float32Array, size: number): Float64Array {
  if (pixels.length !== size * size * 3) {
    throw new Error(`pixel buffer length ${pixels.length} != ${size}x${size}x3`);
  }
  const out = new Float64Array(RAW_DIM);
  const counts = new Float64Array(GRID * GRID);
  for (let i = 0; i < size; i++) {
    const gy = Math.min(Math.floor((i * GRID) / size), GRID - 1);
    for (let j = 0; j < size; j++) {
      const gx = Math.min(Math.floor((j * GRID) / size), GRID - 1);
      const cell = gy * GRID + gx;
      counts[cell]++;
      for (let c = 0; c < 3; c++) {
        out[cell * 3 + c] += pixels[(i * size + j) * 3 + c];
      }
    }
  }
  for (let cell = 0; cell < GRID * GRID; cell++) {
    if (counts[cell] > 0) {
      for (let c = 0; c < 3; c++) out[cell * 3 + c] /= counts[cell];
    }
  }
  const base = GRID * GRID * 3;
  const nPix = size * size;
  for (let c = 0; c < 3; c++) {
    let mean = 0;
    for (let k = 0; k < nPix; k++) mean += pixels[k * 3 + c];
    mean /= nPix;
    let varSum = 0;
    for (let k = 0; k < nPix; k++) {
      const d = pixels[k * 3 + c] - mean;
      varSum += d * d;
    }
    out[base + c] = mean;
    out[base + 3 + c] = Math.sqrt(varSum / nPix);
  }
  return out;
}

/** Region feature: project the pooled pixel statistics into the model space. */
export function encodeRegion(pixels: Float32Array, size: number, modelId: string): Float64Array {
  const { dim } = parseModel(modelId);
  const raw = rawDescriptor(pixels, size);
  const proj = projectionMatrix(modelId, dim);
  const out = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    let acc = 0;
    for (let j = 0; j < RAW_DIM; j++) {
      acc += proj[i * RAW_DIM + j] * raw[j];
    }
    out[i] = acc;
  }
  return out;
}

export function normalizeInPlace(v: Float64Array): Float64Array {
  let ss = 0;
  for (let i = 0; i < v.length; i++) ss += v[i] * v[i];
  const norm = Math.sqrt(ss);
  if (norm === 0) {
    throw new Error('cannot normalize a zero-norm vector');
  }
  for (let i = 0; i < v.length; i++) v[i] /= norm;
  return v;
}

/** Unit embedding of one prompt: mean of seeded per-token vectors. */
export function encodePrompt(prompt: string, modelId: string): Float64Array {
  const { dim } = parseModel(modelId);
  const tokens = prompt.toLowerCase().split(/[^a-z0-9]+/).filter(t => t.length > 0);
  if (tokens.length === 0) {
    throw new Error(`prompt ${JSON.stringify(prompt)} has no tokens`);
  }
  const out = new Float64Array(dim);
  for (const token of tokens) {
    const v = gaussians(`${modelId}|token|${token}`, dim);
    for (let i = 0; i < dim; i++) out[i] += v[i];
  }
  for (let i = 0; i < dim; i++) out[i] /= tokens.length;
  return normalizeInPlace(out);
}

export function validateTemplates(templates: string[]): void {
  if (templates.length === 0) {
    throw new Error('at least one prompt template is required');
  }
  for (const t of templates) {
    if (t.split(CLASS_SLOT).length !== 2) {
      throw new Error(`template ${JSON.stringify(t)} must contain the ${CLASS_SLOT} placeholder exactly once`);
    }
  }
}

/**
 * Class embedding: encode every template with the class name substituted,
 * average the unit prompt vectors, and re-normalize the mean.
 */
export function encodeClass(name: string, templates: string[], modelId: string): Float64Array {
  validateTemplates(templates);
  const { dim } = parseModel(modelId);
  const out = new Float64Array(dim);
  for (const template of templates) {
    const v = encodePrompt(template.replace(CLASS_SLOT, name), modelId);
    for (let i = 0; i < dim; i++) out[i] += v[i];
  }
  for (let i = 0; i < dim; i++) out[i] /= templates.length;
  return normalizeInPlace(out);
}
