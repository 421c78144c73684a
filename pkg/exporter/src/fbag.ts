/**
 * FBAG v1 writer and reader.
 *
 * Layout (little-endian, no compression):
 *
 *     magic  4 bytes  "FBAG"
 *     u32    version  (1)
 *     u32    idLen
 *     bytes  slideId (UTF-8, idLen bytes)
 *     u32    N        (patch count, >= 1)
 *     u32    D        (feature dimension, >= 1)
 *     u32    patchSize
 *     N x (i32 x, i32 y)
 *     N x D  IEEE-754 float32, row-major
 *
 * Total file length is 24 + idLen + 8*N + 4*N*D exactly.
 */

import { readFileSync, writeFileSync } from 'fs';

export class FbagError extends Error {}

export const FBAG_MAGIC = 'FBAG';
export const FBAG_VERSION = 1;
const HEADER_FIXED = 24;

export interface BagCoord {
  x: number;
  y: number;
}

export interface FeatureBagFile {
  slideId: string;
  patchSize: number;
  coords: BagCoord[];
  /** N*D row-major; stored as float32 on disk. */
  features: Float32Array;
  dim: number;
}

export function expectedFileSize(idLen: number, n: number, d: number): number {
  return HEADER_FIXED + idLen + 8 * n + 4 * n * d;
}

export function encodeBag(bag: FeatureBagFile): Buffer {
  const { slideId, patchSize, coords, features, dim } = bag;
  if (!slideId) throw new FbagError('slideId must be non-empty');
  const n = coords.length;
  if (n < 1 || dim < 1) throw new FbagError(`need N >= 1 and D >= 1, got N=${n} D=${dim}`);
  if (features.length !== n * dim) {
    throw new FbagError(`features hold ${features.length} values, expected ${n * dim}`);
  }
  if (patchSize < 1) throw new FbagError(`patchSize must be >= 1, got ${patchSize}`);
  for (const c of coords) {
    if (c.x < 0 || c.y < 0 || !Number.isInteger(c.x) || !Number.isInteger(c.y)) {
      throw new FbagError(`invalid patch coordinate (${c.x}, ${c.y})`);
    }
  }
  for (let i = 0; i < features.length; i++) {
    if (!Number.isFinite(features[i])) {
      throw new FbagError(`bag ${JSON.stringify(slideId)} has non-finite feature values`);
    }
  }
  const sid = Buffer.from(slideId, 'utf-8');
  const buf = Buffer.alloc(expectedFileSize(sid.length, n, dim));
  let off = 0;
  off += buf.write(FBAG_MAGIC, off, 'ascii');
  off = buf.writeUInt32LE(FBAG_VERSION, off);
  off = buf.writeUInt32LE(sid.length, off);
  off += sid.copy(buf, off);
  off = buf.writeUInt32LE(n, off);
  off = buf.writeUInt32LE(dim, off);
  off = buf.writeUInt32LE(patchSize, off);
  for (const c of coords) {
    off = buf.writeInt32LE(c.x, off);
    off = buf.writeInt32LE(c.y, off);
  }
  for (let i = 0; i < features.length; i++) {
    off = buf.writeFloatLE(features[i], off);
  }
  return buf;
}

export function writeBag(bag: FeatureBagFile, path: string): void {
  writeFileSync(path, encodeBag(bag));
}

export function decodeBag(blob: Buffer, label = 'buffer'): FeatureBagFile {
  if (blob.length < 4 || blob.toString('ascii', 0, 4) !== FBAG_MAGIC) {
    if (blob.length < 4) throw new FbagError(`${label}: truncated file (${blob.length} bytes)`);
    throw new FbagError(`${label}: bad magic`);
  }
  if (blob.length < 12) throw new FbagError(`${label}: truncated file (${blob.length} bytes)`);
  const version = blob.readUInt32LE(4);
  if (version !== FBAG_VERSION) throw new FbagError(`${label}: unsupported version ${version}`);
  const idLen = blob.readUInt32LE(8);
  if (blob.length < 12 + idLen + 12) throw new FbagError(`${label}: truncated header`);
  const slideId = blob.toString('utf-8', 12, 12 + idLen);
  const n = blob.readUInt32LE(12 + idLen);
  const dim = blob.readUInt32LE(16 + idLen);
  const patchSize = blob.readUInt32LE(20 + idLen);
  if (n === 0 || dim === 0) throw new FbagError(`${label}: N and D must be >= 1, got N=${n} D=${dim}`);
  const expected = expectedFileSize(idLen, n, dim);
  if (blob.length !== expected) {
    const kind = blob.length < expected ? 'truncated' : 'oversized';
    throw new FbagError(`${label}: ${kind} file, ${blob.length} bytes but header implies ${expected}`);
  }
  let off = HEADER_FIXED + idLen;
  const coords: BagCoord[] = [];
  for (let i = 0; i < n; i++) {
    const x = blob.readInt32LE(off);
    const y = blob.readInt32LE(off + 4);
    if (x < 0 || y < 0) throw new FbagError(`${label}: negative patch coordinate (${x}, ${y})`);
    coords.push({ x, y });
    off += 8;
  }
  const features = new Float32Array(n * dim);
  for (let i = 0; i < features.length; i++) {
    features[i] = blob.readFloatLE(off);
    off += 4;
    if (!Number.isFinite(features[i])) {
      throw new FbagError(`${label}: non-finite feature values`);
    }
  }
  return { slideId, patchSize, coords, features, dim };
}

export function readBag(path: string): FeatureBagFile {
  return decodeBag(readFileSync(path), path);
}
