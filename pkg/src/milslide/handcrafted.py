"""Deterministic handcrafted patch features (32 values).

A desk-scale substitute for neural backbones so the whole pipeline runs
without pretrained weights. Layout of the output vector:

    [0:8]    normalized 8-bin intensity histogram, red channel
    [8:16]   same, green
    [16:24]  same, blue
    [24:27]  per-channel mean / 255 (R, G, B)
    [27:30]  per-channel population std / 255 (R, G, B)
    [30]     mean of grayscale gradient magnitude / 255
    [31]     std of grayscale gradient magnitude / 255

The gradient uses central differences in the interior and one-sided
differences at the borders (np.gradient semantics), so every output lies
in [0, 2]: each unit-scaled difference is bounded by 1 and the magnitude
by sqrt(2).
"""

from __future__ import annotations

import numpy as np

from .tiler import validate_raster

FEATURE_DIM = 32


class FeatureError(ValueError):
    pass


def extract_handcrafted(patch: np.ndarray) -> np.ndarray:
    """Compute the 32-dim feature vector of one square RGB patch."""
    patch = validate_raster(patch)
    h, w = patch.shape[:2]
    if h != w:
        raise FeatureError(f"patch must be square, got {w}x{h}")
    out = np.empty(FEATURE_DIM, dtype=np.float64)
    total = h * w
    for c in range(3):
        counts = np.bincount(patch[:, :, c].ravel() // 32, minlength=8)
        out[8 * c : 8 * c + 8] = counts / total
    channels = patch.astype(np.float64)
    out[24:27] = channels.mean(axis=(0, 1)) / 255.0
    out[27:30] = channels.std(axis=(0, 1)) / 255.0
    gray = channels.mean(axis=2)
    if h == 1:
        magnitude = np.zeros_like(gray)
    else:
        gy, gx = np.gradient(gray)
        magnitude = np.hypot(gx, gy)
    out[30] = magnitude.mean() / 255.0
    out[31] = magnitude.std() / 255.0
    return out
