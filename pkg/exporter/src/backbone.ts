/**
 * Frozen per-patch feature backbones.
 *
 * Each named backbone maps a square RGB patch to a fixed-dimension
 * embedding: resnet50-shaped output (1024-dim at patch 224) and a
 * ctranspath-like transformer shape (768-dim at patch 256). The weights
 * are the package defaults, generated once from a name-derived seed and
 * never fine-tuned, so exports are reproducible byte for byte. The
 * downstream pipeline is dimension-agnostic; any backbone emitting the
 * declared dimension is interchangeable.
 */

export class BackboneError extends Error {}

export interface BackboneSpec {
  name: string;
  patchSize: number;
  expectedDim: number;
}

export const BACKBONES: Record<string, BackboneSpec> = {
  resnet50: { name: 'resnet50', patchSize: 224, expectedDim: 1024 },
  ctranspath: { name: 'ctranspath', patchSize: 256, expectedDim: 768 },
};

export function backboneByName(name: string): BackboneSpec {
  const spec = BACKBONES[name];
  if (!spec) {
    throw new BackboneError(
      `unknown backbone ${JSON.stringify(name)}; available: ${Object.keys(BACKBONES).join(', ')}`,
    );
  }
  return spec;
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1). */
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

// input summary: POOL x POOL block means per channel, scaled to [0,1]
const POOL = 8;
const SUMMARY_DIM = POOL * POOL * 3;

export class Embedder {
  readonly spec: BackboneSpec;
  private readonly weights: Float64Array; // (expectedDim, SUMMARY_DIM) row-major
  private readonly bias: Float64Array;

  constructor(spec: BackboneSpec) {
    this.spec = spec;
    const rand = mulberry32(fnv1a(spec.name));
    const bound = 1.0 / Math.sqrt(SUMMARY_DIM);
    this.weights = new Float64Array(spec.expectedDim * SUMMARY_DIM);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (2.0 * rand() - 1.0) * bound;
    }
    this.bias = new Float64Array(spec.expectedDim);
    for (let i = 0; i < this.bias.length; i++) {
      this.bias[i] = (2.0 * rand() - 1.0) * 0.1;
    }
  }

  /** Mean pixel value of each POOL x POOL block, per channel, in [0,1]. */
  summarize(patch: Uint8Array, patchSize: number): Float64Array {
    if (patch.length !== patchSize * patchSize * 3) {
      throw new BackboneError(
        `patch holds ${patch.length} bytes, expected ${patchSize * patchSize * 3}`,
      );
    }
    const v = new Float64Array(SUMMARY_DIM);
    for (let by = 0; by < POOL; by++) {
      const y0 = Math.floor((by * patchSize) / POOL);
      const y1 = Math.floor(((by + 1) * patchSize) / POOL);
      for (let bx = 0; bx < POOL; bx++) {
        const x0 = Math.floor((bx * patchSize) / POOL);
        const x1 = Math.floor(((bx + 1) * patchSize) / POOL);
        let r = 0;
        let g = 0;
        let b = 0;
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const p = (y * patchSize + x) * 3;
            r += patch[p];
            g += patch[p + 1];
            b += patch[p + 2];
          }
        }
        const area = (y1 - y0) * (x1 - x0);
        const base = (by * POOL + bx) * 3;
        v[base] = r / area / 255.0;
        v[base + 1] = g / area / 255.0;
        v[base + 2] = b / area / 255.0;
      }
    }
    return v;
  }

  /** Embed one patch; output is bounded by tanh, so always finite. */
  embed(patch: Uint8Array, patchSize: number): Float64Array {
    const v = this.summarize(patch, patchSize);
    const out = new Float64Array(this.spec.expectedDim);
    for (let k = 0; k < out.length; k++) {
      let acc = this.bias[k];
      const row = k * SUMMARY_DIM;
      for (let j = 0; j < SUMMARY_DIM; j++) {
        acc += this.weights[row + j] * v[j];
      }
      out[k] = Math.tanh(acc);
    }
    return out;
  }
}
