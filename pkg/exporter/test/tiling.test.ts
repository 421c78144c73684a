import { describe, expect, it } from 'vitest';

import {
  RgbImage,
  TilingError,
  buildTissueMask,
  cropPatch,
  otsuThreshold,
  saturationBin,
  tileGrid,
} from '../src/tiling';

function solidImage(width: number, height: number, rgb: [number, number, number]): RgbImage {
  const data = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) data.set(rgb, 3 * i);
  return { width, height, data };
}

/** Checkerboard of saturated pink and white with 8px blocks. */
function checkerboard(size: number): RgbImage {
  const data = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const pink = (Math.floor(y / 8) + Math.floor(x / 8)) % 2 === 0;
      data.set(pink ? [200, 90, 140] : [255, 255, 255], (y * size + x) * 3);
    }
  }
  return { width: size, height: size, data };
}

/** Deterministic formula image the reference implementation also tiled. */
function formulaImage(size: number): RgbImage {
  const data = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const p = (y * size + x) * 3;
      data[p] = (x * 7 + y * 13) % 256;
      data[p + 1] = (x * 3 + y * 5) % 256;
      data[p + 2] = (x * 11 + y * 2) % 256;
    }
  }
  return { width: size, height: size, data };
}

describe('saturationBin', () => {
  it('is 0 for gray pixels and 255 for pure hues', () => {
    expect(saturationBin(255, 255, 255)).toBe(0);
    expect(saturationBin(0, 0, 0)).toBe(0);
    expect(saturationBin(128, 128, 128)).toBe(0);
    expect(saturationBin(255, 0, 0)).toBe(255); // sat 1.0 clamps into the top bin
  });

  it('matches the reference bin for the test pink', () => {
    // sat = (200-90)/200 = 0.55 -> trunc(0.55 * 256) = 140
    expect(saturationBin(200, 90, 140)).toBe(140);
  });
});

describe('otsuThreshold', () => {
  it('returns null for degenerate histograms', () => {
    const single = new Array(256).fill(0);
    single[5] = 10;
    expect(otsuThreshold(single)).toBeNull();
    expect(otsuThreshold(new Array(256).fill(0))).toBeNull();
  });

  it('splits a two-bin histogram at the lower bin', () => {
    const h = new Array(256).fill(0);
    h[0] = 70;
    h[140] = 30;
    expect(otsuThreshold(h)).toBe(0);
  });

  it('matches the reference implementation on fixed histograms', () => {
    // thresholds computed once with the Python toolkit and frozen here
    const histA = Array.from({ length: 256 }, (_, i) => (i * 2654435761) % 97);
    const histB = Array.from({ length: 256 }, (_, i) => ((i * 48271) % 65537) % 50);
    const histC = Array.from(
      { length: 256 },
      (_, i) => Math.max(0, 100 - Math.abs(i - 40)) + Math.max(0, 80 - Math.abs(i - 200)),
    );
    expect(otsuThreshold(histA)).toBe(128);
    expect(otsuThreshold(histB)).toBe(128);
    expect(otsuThreshold(histC)).toBe(123);
  });
});

describe('buildTissueMask', () => {
  it('flags a single-color image as degenerate with an all-false mask', () => {
    const mask = buildTissueMask(solidImage(32, 16, [200, 90, 140]));
    expect(mask.degenerate).toBe(true);
    expect(mask.width).toBe(32);
    expect(mask.height).toBe(16);
    expect(mask.bits.every(b => b === 0)).toBe(true);
  });

  it('marks exactly the saturated half of a checkerboard', () => {
    const mask = buildTissueMask(checkerboard(64));
    expect(mask.degenerate).toBe(false);
    let count = 0;
    for (const b of mask.bits) count += b;
    expect(count).toBe((64 * 64) / 2);
  });
});

describe('tileGrid', () => {
  it('keeps the full grid on the acceptance checkerboard', () => {
    const img = checkerboard(448);
    const mask = buildTissueMask(img);
    const at224 = tileGrid(448, 448, 224, mask, 0.5).map(c => [c.x, c.y]);
    expect(at224).toEqual([
      [0, 0],
      [224, 0],
      [0, 224],
      [224, 224],
    ]);
    const at256 = tileGrid(448, 448, 256, mask, 0.5).map(c => [c.x, c.y]);
    expect(at256).toEqual([[0, 0]]);
  });

  it('reproduces the reference coordinates on the formula image', () => {
    // frozen from the Python toolkit: same image, patch 32
    const img = formulaImage(96);
    const mask = buildTissueMask(img);
    expect(mask.degenerate).toBe(false);
    let count = 0;
    for (const b of mask.bits) count += b;
    expect(count).toBe(5643);
    const at05 = tileGrid(96, 96, 32, mask, 0.5).map(c => [c.x, c.y]);
    expect(at05).toEqual([
      [0, 0],
      [32, 0],
      [64, 0],
      [0, 32],
      [32, 32],
      [64, 32],
      [0, 64],
      [32, 64],
      [64, 64],
    ]);
    const at06 = tileGrid(96, 96, 32, mask, 0.6).map(c => [c.x, c.y]);
    expect(at06).toEqual([
      [32, 0],
      [64, 0],
      [0, 32],
      [32, 64],
    ]);
    const at065 = tileGrid(96, 96, 32, mask, 0.65).map(c => [c.x, c.y]);
    expect(at065).toEqual([
      [32, 0],
      [64, 0],
      [32, 64],
    ]);
  });

  it('discards remainder margins and raising the threshold never adds coords', () => {
    const img = checkerboard(500);
    const mask = buildTissueMask(img);
    const base = tileGrid(500, 500, 224, mask, 0.0);
    expect(base.length).toBe(4); // floor(500/224) = 2 per axis
    let prev = base.length;
    for (const frac of [0.25, 0.5, 0.75, 1.0]) {
      const n = tileGrid(500, 500, 224, mask, frac).length;
      expect(n).toBeLessThanOrEqual(prev);
      prev = n;
    }
  });

  it('rejects patches that do not fit and fractions outside [0,1]', () => {
    const img = checkerboard(64);
    const mask = buildTissueMask(img);
    expect(() => tileGrid(64, 64, 65, mask, 0.5)).toThrow(TilingError);
    expect(() => tileGrid(64, 64, 0, mask, 0.5)).toThrow(TilingError);
    expect(() => tileGrid(64, 64, 32, mask, 1.5)).toThrow(TilingError);
    expect(() => tileGrid(64, 64, 32, mask, NaN)).toThrow(TilingError);
  });

  it('rejects a mask whose dims disagree with the image', () => {
    const mask = buildTissueMask(checkerboard(64));
    expect(() => tileGrid(96, 96, 32, mask, 0.5)).toThrow(TilingError);
  });
});

describe('cropPatch', () => {
  it('copies the exact pixel block', () => {
    const img = formulaImage(16);
    const patch = cropPatch(img, { x: 4, y: 8, patchSize: 4 });
    expect(patch.length).toBe(4 * 4 * 3);
    for (let row = 0; row < 4; row++) {
      for (let col = 0; col < 4; col++) {
        const src = ((8 + row) * 16 + (4 + col)) * 3;
        const dst = (row * 4 + col) * 3;
        expect(patch[dst]).toBe(img.data[src]);
        expect(patch[dst + 1]).toBe(img.data[src + 1]);
        expect(patch[dst + 2]).toBe(img.data[src + 2]);
      }
    }
  });

  it('rejects out-of-bounds patches', () => {
    const img = formulaImage(16);
    expect(() => cropPatch(img, { x: 14, y: 0, patchSize: 4 })).toThrow(TilingError);
    expect(() => cropPatch(img, { x: 0, y: 13, patchSize: 4 })).toThrow(TilingError);
  });
});
