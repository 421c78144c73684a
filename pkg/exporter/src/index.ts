export { BACKBONES, BackboneError, BackboneSpec, Embedder, backboneByName } from './backbone';
export { ExportError, ExportOptions, ExportSummary, exportFeatures } from './export';
export {
  BagCoord,
  FBAG_MAGIC,
  FBAG_VERSION,
  FbagError,
  FeatureBagFile,
  decodeBag,
  encodeBag,
  expectedFileSize,
  readBag,
  writeBag,
} from './fbag';
export { DecodeError, encodeRgbPng, readRgbPng } from './png';
export {
  PatchCoord,
  RgbImage,
  TilingError,
  TissueMask,
  buildTissueMask,
  cropPatch,
  otsuThreshold,
  saturationBin,
  tileGrid,
} from './tiling';
