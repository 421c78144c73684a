import { readFileSync } from 'fs';
import { PNG } from 'pngjs';

import { RgbImage } from './tiling';

/** Raised when a slide file is readable but not a decodable image. */
export class DecodeError extends Error {}

/**
 * Decode a PNG slide into a flat RGB raster. pngjs normalizes every
 * bit depth and color type to 8-bit RGBA; the alpha plane is dropped.
 */
export function readRgbPng(path: string): RgbImage {
  const raw = readFileSync(path);
  let png: PNG;
  try {
    png = PNG.sync.read(raw);
  } catch (err) {
    throw new DecodeError(`cannot decode ${path}: ${(err as Error).message}`);
  }
  const nPixels = png.width * png.height;
  const data = new Uint8Array(nPixels * 3);
  for (let i = 0; i < nPixels; i++) {
    data[3 * i] = png.data[4 * i];
    data[3 * i + 1] = png.data[4 * i + 1];
    data[3 * i + 2] = png.data[4 * i + 2];
  }
  return { width: png.width, height: png.height, data };
}

/** Encode a flat RGB raster as a PNG buffer (opaque alpha). */
export function encodeRgbPng(image: RgbImage): Buffer {
  const png = new PNG({ width: image.width, height: image.height });
  const nPixels = image.width * image.height;
  for (let i = 0; i < nPixels; i++) {
    png.data[4 * i] = image.data[3 * i];
    png.data[4 * i + 1] = image.data[3 * i + 1];
    png.data[4 * i + 2] = image.data[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}
