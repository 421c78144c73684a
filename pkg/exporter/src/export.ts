import { basename } from 'path';

import { BackboneSpec, Embedder } from './backbone';
import { writeBag } from './fbag';
import { readRgbPng } from './png';
import { buildTissueMask, cropPatch, tileGrid } from './tiling';

export class ExportError extends Error {}

export interface ExportOptions {
  minTissueFrac?: number;
  /** Pyramid level to read; flat rasters have only level 0. */
  level?: number;
}

export interface ExportSummary {
  slideId: string;
  nPatches: number;
  dim: number;
  patchSize: number;
  out: string;
}

/**
 * Tile one slide, embed every tissue patch and write an FBAG v1 file.
 *
 * Tiling follows the shared contract exactly (saturation Otsu mask at
 * full resolution, origin-anchored grid, coverage >= minTissueFrac), so
 * the coordinates equal what the downstream toolkit would produce on
 * the same raster.
 */
export function exportFeatures(
  slidePath: string,
  spec: BackboneSpec,
  outPath: string,
  options: ExportOptions = {},
): ExportSummary {
  const minTissueFrac = options.minTissueFrac ?? 0.5;
  const level = options.level ?? 0;
  if (level !== 0) {
    throw new ExportError(`flat rasters expose a single level; --level must be 0, got ${level}`);
  }
  const image = readRgbPng(slidePath);
  const mask = buildTissueMask(image);
  if (mask.degenerate) {
    process.stderr.write(
      `warning: degenerate saturation histogram in ${slidePath}; mask is all background\n`,
    );
  }
  const coords = tileGrid(image.width, image.height, spec.patchSize, mask, minTissueFrac);
  if (coords.length === 0) {
    throw new ExportError(
      `no tissue patches found in ${slidePath} at patch_size=${spec.patchSize}, min_tissue_frac=${minTissueFrac}`,
    );
  }
  const embedder = new Embedder(spec);
  const features = new Float32Array(coords.length * spec.expectedDim);
  for (let i = 0; i < coords.length; i++) {
    const embedding = embedder.embed(cropPatch(image, coords[i]), spec.patchSize);
    if (embedding.length !== spec.expectedDim) {
      throw new ExportError(
        `backbone ${spec.name} emitted D=${embedding.length}, expected ${spec.expectedDim}`,
      );
    }
    features.set(embedding, i * spec.expectedDim);
  }
  const slideId = basename(slidePath).replace(/\.[^.]+$/, '');
  writeBag(
    {
      slideId,
      patchSize: spec.patchSize,
      coords: coords.map(c => ({ x: c.x, y: c.y })),
      features,
      dim: spec.expectedDim,
    },
    outPath,
  );
  return {
    slideId,
    nPatches: coords.length,
    dim: spec.expectedDim,
    patchSize: spec.patchSize,
    out: outPath,
  };
}
