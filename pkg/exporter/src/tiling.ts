/**
 * Tissue detection and patch grid generation on flat RGB rasters.
 *
 * This mirrors the Python toolkit's tiling contract operation for
 * operation: HSV saturation per pixel, Otsu threshold over a 256-bin
 * histogram, then a non-overlapping origin-anchored grid keeping cells
 * whose tissue coverage reaches a minimum fraction. All arithmetic is
 * IEEE-754 double in the same order, so coordinates match exactly.
 */

export class TilingError extends Error {}

/** Flat 8-bit RGB raster, row-major, 3 bytes per pixel. */
export interface RgbImage {
  width: number;
  height: number;
  data: Uint8Array;
}

export interface PatchCoord {
  x: number;
  y: number;
  patchSize: number;
}

/** Boolean tissue map; scale = full-res pixels per mask pixel. */
export interface TissueMask {
  width: number;
  height: number;
  bits: Uint8Array;
  scale: number;
  degenerate: boolean;
}

export function validateImage(image: RgbImage): void {
  if (image.width < 1 || image.height < 1) {
    throw new TilingError('image must have at least one pixel');
  }
  if (image.data.length !== image.width * image.height * 3) {
    throw new TilingError(
      `image data holds ${image.data.length} bytes, expected ${image.width * image.height * 3}`,
    );
  }
}

/** Saturation histogram bin of one pixel: min(trunc(sat * 256), 255). */
export function saturationBin(r: number, g: number, b: number): number {
  const rf = r / 255.0;
  const gf = g / 255.0;
  const bf = b / 255.0;
  const cmax = Math.max(rf, gf, bf);
  const cmin = Math.min(rf, gf, bf);
  const sat = cmax > 0 ? (cmax - cmin) / cmax : 0.0;
  return Math.min(Math.trunc(sat * 256.0), 255);
}

/**
 * Index t maximizing between-class variance of bins <= t vs > t.
 *
 * Returns null for a degenerate histogram (all mass in one bin). Ties
 * resolve to the lowest index. Counts are integers, so the running sums
 * stay exact and the result is bit-compatible with the Python side.
 */
export function otsuThreshold(histogram: ArrayLike<number>): number | null {
  const n = histogram.length;
  let total = 0;
  let sumAll = 0;
  for (let i = 0; i < n; i++) {
    total += histogram[i];
    sumAll += histogram[i] * i;
  }
  if (total <= 0) return null;
  let w0 = 0;
  let sum0 = 0;
  let best = -1;
  let bestBetween = -Infinity;
  for (let t = 0; t < n; t++) {
    w0 += histogram[t];
    sum0 += histogram[t] * t;
    const w1 = total - w0;
    if (w0 <= 0 || w1 <= 0) continue;
    const mu0 = sum0 / w0;
    const mu1 = (sumAll - sum0) / w1;
    const d = mu0 - mu1;
    const between = w0 * w1 * (d * d);
    if (between > bestBetween) {
      bestBetween = between;
      best = t;
    }
  }
  if (best < 0 || bestBetween <= 0) return null;
  return best;
}

/**
 * Otsu-threshold the saturation histogram at full resolution (scale 1).
 * A degenerate histogram yields an all-false mask with degenerate=true.
 */
export function buildTissueMask(image: RgbImage): TissueMask {
  validateImage(image);
  const { width, height, data } = image;
  const nPixels = width * height;
  const bins = new Int32Array(nPixels);
  const counts = new Float64Array(256);
  for (let i = 0; i < nPixels; i++) {
    const bin = saturationBin(data[3 * i], data[3 * i + 1], data[3 * i + 2]);
    bins[i] = bin;
    counts[bin] += 1;
  }
  const t = otsuThreshold(counts);
  const bits = new Uint8Array(nPixels);
  if (t === null) {
    return { width, height, bits, scale: 1, degenerate: true };
  }
  for (let i = 0; i < nPixels; i++) {
    bits[i] = bins[i] > t ? 1 : 0;
  }
  return { width, height, bits, scale: 1, degenerate: false };
}

/**
 * Non-overlapping origin-anchored grid filtered by tissue coverage.
 *
 * A cell is kept iff the fraction of true mask pixels among those whose
 * footprint intersects the cell is >= minTissueFrac. Remainder margins
 * are discarded. Output sorted by (y, x).
 */
export function tileGrid(
  imageW: number,
  imageH: number,
  patchSize: number,
  mask: TissueMask,
  minTissueFrac: number,
): PatchCoord[] {
  if (patchSize < 1 || patchSize > Math.min(imageW, imageH)) {
    throw new TilingError(`patch size ${patchSize} does not fit a ${imageW}x${imageH} image`);
  }
  if (!(minTissueFrac >= 0.0 && minTissueFrac <= 1.0)) {
    throw new TilingError(`minTissueFrac must be in [0,1], got ${minTissueFrac}`);
  }
  const s = mask.scale;
  if (mask.width !== Math.ceil(imageW / s) || mask.height !== Math.ceil(imageH / s)) {
    throw new TilingError(
      `mask dims (${mask.width}, ${mask.height}) inconsistent with image ${imageW}x${imageH} at scale ${s}`,
    );
  }
  const coords: PatchCoord[] = [];
  for (let y = 0; y + patchSize <= imageH; y += patchSize) {
    const my0 = Math.floor(y / s);
    const my1 = Math.min(mask.height, Math.ceil((y + patchSize) / s));
    for (let x = 0; x + patchSize <= imageW; x += patchSize) {
      const mx0 = Math.floor(x / s);
      const mx1 = Math.min(mask.width, Math.ceil((x + patchSize) / s));
      let count = 0;
      for (let my = my0; my < my1; my++) {
        const row = my * mask.width;
        for (let mx = mx0; mx < mx1; mx++) {
          count += mask.bits[row + mx];
        }
      }
      const frac = count / ((my1 - my0) * (mx1 - mx0));
      if (frac >= minTissueFrac) {
        coords.push({ x, y, patchSize });
      }
    }
  }
  return coords;
}

/** Pixel-exact copy of one patch, row-major RGB. */
export function cropPatch(image: RgbImage, coord: PatchCoord): Uint8Array {
  validateImage(image);
  const { x, y, patchSize } = coord;
  if (x < 0 || y < 0 || x + patchSize > image.width || y + patchSize > image.height) {
    throw new TilingError(
      `patch at (${x},${y}) size ${patchSize} exceeds ${image.width}x${image.height} image bounds`,
    );
  }
  const out = new Uint8Array(patchSize * patchSize * 3);
  for (let row = 0; row < patchSize; row++) {
    const src = ((y + row) * image.width + x) * 3;
    out.set(image.data.subarray(src, src + patchSize * 3), row * patchSize * 3);
  }
  return out;
}
