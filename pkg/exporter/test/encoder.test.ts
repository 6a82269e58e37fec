import { describe, expect, it } from 'vitest';

import {
  encodeClass,
  encodePrompt,
  encodeRegion,
  normalizeInPlace,
  parseModel,
  rawDescriptor,
  validateTemplates,
} from '../src/encoder.js';
import { cropResizeBilinear } from '../src/image.js';
import { gradientImage, solidImage } from './fixtures.js';

function norm(v: Float64Array): number {
  let ss = 0;
  for (const x of v) ss += x * x;
  return Math.sqrt(ss);
}

describe('model identifiers', () => {
  it('parses the family and dimension', () => {
    expect(parseModel('pixstat/64')).toEqual({ family: 'pixstat', dim: 64 });
    expect(parseModel('pixstat/2')).toEqual({ family: 'pixstat', dim: 2 });
  });

  it('rejects unknown families', () => {
    expect(() => parseModel('resnet/64')).toThrow(/unknown family 'resnet'/);
  });

  it('rejects malformed identifiers', () => {
    expect(() => parseModel('pixstat')).toThrow(/expected "<family>\/<dim>"/);
    expect(() => parseModel('pixstat/64/4')).toThrow(/expected/);
    expect(() => parseModel('pixstat/1')).toThrow(/dim must be >= 2/);
  });
});

describe('region encoding', () => {
  const crop = (phase: number) =>
    cropResizeBilinear(gradientImage(20, 20, phase), [2.0, 2.0, 18.0, 18.0], 16);

  it('is deterministic', () => {
    const a = encodeRegion(crop(0), 16, 'pixstat/32');
    const b = encodeRegion(crop(0), 16, 'pixstat/32');
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it('produces the model dimension', () => {
    expect(encodeRegion(crop(0), 16, 'pixstat/32')).toHaveLength(32);
    expect(encodeRegion(crop(0), 16, 'pixstat/48')).toHaveLength(48);
  });

  it('separates visually different crops', () => {
    const a = encodeRegion(crop(0), 16, 'pixstat/32');
    const b = encodeRegion(crop(77), 16, 'pixstat/32');
    let diff = 0;
    for (let i = 0; i < a.length; i++) diff = Math.max(diff, Math.abs(a[i] - b[i]));
    expect(diff).toBeGreaterThan(1e-3);
  });

  it('pools a solid crop to constant cell statistics', () => {
    const pixels = cropResizeBilinear(solidImage(16, 16, [255, 0, 0]), [0, 0, 16, 16], 16);
    const raw = rawDescriptor(pixels, 16);
    // Every grid cell sees the same red pixel; std of a constant channel is 0.
    expect(raw[0]).toBeCloseTo(1.0, 10);
    expect(raw[1]).toBeCloseTo(0.0, 10);
    expect(raw[raw.length - 3]).toBeCloseTo(0.0, 10); // red std
  });

  it('rejects a pixel buffer that does not match the size', () => {
    expect(() => encodeRegion(new Float32Array(10), 16, 'pixstat/32')).toThrow(/pixel buffer length/);
  });
});

describe('prompt encoding', () => {
  it('returns a unit vector deterministically', () => {
    const a = encodePrompt('a photo of a cat', 'pixstat/24');
    const b = encodePrompt('a photo of a cat', 'pixstat/24');
    expect(norm(a)).toBeCloseTo(1.0, 12);
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it('is case and punctuation insensitive', () => {
    const a = encodePrompt('A photo of a CAT!', 'pixstat/24');
    const b = encodePrompt('a photo of a cat', 'pixstat/24');
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it('distinguishes different prompts', () => {
    const a = encodePrompt('a photo of a cat', 'pixstat/24');
    const b = encodePrompt('a photo of a dog', 'pixstat/24');
    let dot = 0;
    for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
    expect(dot).toBeLessThan(0.999);
  });

  it('rejects prompts with no tokens', () => {
    expect(() => encodePrompt('  --- ', 'pixstat/24')).toThrow(/has no tokens/);
  });
});

describe('class encoding', () => {
  it('requires the placeholder exactly once', () => {
    expect(() => validateTemplates(['a photo of a cat'])).toThrow(/exactly once/);
    expect(() => validateTemplates(['[CLASS] and [CLASS]'])).toThrow(/exactly once/);
    expect(() => validateTemplates([])).toThrow(/at least one/);
  });

  it('single template reduces to the prompt embedding', () => {
    const viaClass = encodeClass('heron', ['a photo of a [CLASS]'], 'pixstat/24');
    const viaPrompt = encodePrompt('a photo of a heron', 'pixstat/24');
    for (let i = 0; i < viaClass.length; i++) {
      expect(viaClass[i]).toBeCloseTo(viaPrompt[i], 12);
    }
  });

  it('averages templates then re-normalizes', () => {
    const t1 = 'a photo of a [CLASS]';
    const t2 = 'a cropped photo of the [CLASS]';
    const combined = encodeClass('heron', [t1, t2], 'pixstat/24');
    const r1 = encodeClass('heron', [t1], 'pixstat/24');
    const r2 = encodeClass('heron', [t2], 'pixstat/24');
    const mean = new Float64Array(24);
    for (let i = 0; i < 24; i++) mean[i] = (r1[i] + r2[i]) / 2;
    normalizeInPlace(mean);
    for (let i = 0; i < 24; i++) {
      expect(combined[i]).toBeCloseTo(mean[i], 12);
    }
    expect(norm(combined)).toBeCloseTo(1.0, 12);
  });
});
