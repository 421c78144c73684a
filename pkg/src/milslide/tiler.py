"""Tissue detection and patch grid generation on flat RGB rasters.

Images are (height, width, 3) uint8 numpy arrays. Tissue is detected on a
downsampled thumbnail by Otsu-thresholding the HSV saturation histogram;
the patch grid is a non-overlapping stride-equals-size grid anchored at
the origin, keeping cells whose tissue coverage reaches a minimum fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TilerError(ValueError):
    pass


def validate_raster(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise TilerError(f"expected (height, width, 3) RGB array, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise TilerError(f"expected uint8 pixels, got {image.dtype}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise TilerError("image must have at least one pixel")
    return image


@dataclass(frozen=True)
class PatchCoord:
    """Top-left corner and side length of one square patch, in pixels."""

    x: int
    y: int
    patch_size: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise TilerError(f"negative patch origin ({self.x}, {self.y})")
        if self.patch_size < 1:
            raise TilerError(f"patch_size must be >= 1, got {self.patch_size}")


@dataclass(frozen=True)
class TissueMask:
    """Boolean tissue map at thumbnail scale.

    ``scale`` is the number of full-resolution pixels per mask pixel;
    ``degenerate`` flags a zero-variance saturation histogram (mask is then
    all false, e.g. for a blank slide).
    """

    width: int
    height: int
    bits: np.ndarray
    scale: int
    degenerate: bool = False

    def __post_init__(self):
        if self.bits.shape != (self.height, self.width):
            raise TilerError(f"mask bits shape {self.bits.shape} != ({self.height}, {self.width})")
        if self.scale < 1:
            raise TilerError("mask scale must be >= 1")


def _block_mean(channel: np.ndarray, scale: int) -> np.ndarray:
    """Mean over scale x scale blocks; edge blocks may be partial."""
    h, w = channel.shape
    row_idx = np.arange(0, h, scale)
    col_idx = np.arange(0, w, scale)
    sums = np.add.reduceat(np.add.reduceat(channel.astype(np.float64), row_idx, axis=0), col_idx, axis=1)
    row_sizes = np.diff(np.append(row_idx, h))
    col_sizes = np.diff(np.append(col_idx, w))
    return sums / np.outer(row_sizes, col_sizes)


def _saturation(rgb: np.ndarray) -> np.ndarray:
    """HSV saturation in [0,1]: (max-min)/max, 0 where max is 0."""
    cmax = rgb.max(axis=2)
    cmin = rgb.min(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        sat = np.where(cmax > 0, (cmax - cmin) / np.where(cmax > 0, cmax, 1.0), 0.0)
    return sat


def otsu_threshold(histogram: np.ndarray) -> int | None:
    """Index t maximizing between-class variance of bins <=t vs >t.

    Returns None for a degenerate histogram (all mass in one bin). Ties
    resolve to the lowest index.
    """
    counts = np.asarray(histogram, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return None
    bins = np.arange(counts.size, dtype=np.float64)
    w0 = np.cumsum(counts)
    sum0 = np.cumsum(counts * bins)
    w1 = total - w0
    sum_all = sum0[-1]
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    mu0 = np.where(valid, sum0 / np.where(w0 > 0, w0, 1.0), 0.0)
    mu1 = np.where(valid, (sum_all - sum0) / np.where(w1 > 0, w1, 1.0), 0.0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    best = int(np.argmax(between))
    if between[best] <= 0:
        return None
    return best


def build_tissue_mask(image: np.ndarray, scale: int) -> TissueMask:
    """Otsu-threshold the 256-bin saturation histogram of a thumbnail.

    Degenerate histograms (single colour, zero variance) yield an all-false
    mask with ``degenerate=True`` rather than an error.
    """
    image = validate_raster(image)
    h, w = image.shape[:2]
    scale = int(scale)
    if scale < 1 or scale > min(w, h):
        raise TilerError(f"scale must be in [1, min(width, height)], got {scale}")
    thumb = np.stack([_block_mean(image[:, :, c], scale) for c in range(3)], axis=2)
    sat = _saturation(thumb / 255.0)
    bin_idx = np.minimum((sat * 256.0).astype(np.int64), 255)
    counts = np.bincount(bin_idx.ravel(), minlength=256)
    threshold = otsu_threshold(counts)
    mh, mw = sat.shape
    if threshold is None:
        return TissueMask(width=mw, height=mh, bits=np.zeros((mh, mw), dtype=bool), scale=scale, degenerate=True)
    return TissueMask(width=mw, height=mh, bits=bin_idx > threshold, scale=scale, degenerate=False)


def tile_grid(
    image_w: int,
    image_h: int,
    patch_size: int,
    mask: TissueMask,
    min_tissue_frac: float,
) -> list[PatchCoord]:
    """Non-overlapping origin-anchored grid filtered by tissue coverage.

    A cell is kept iff the fraction of true mask pixels among those whose
    footprint intersects the cell is >= min_tissue_frac. Remainder margins
    (image size modulo patch_size) are discarded. Output sorted by (y, x).
    """
    if patch_size < 1 or patch_size > min(image_w, image_h):
        raise TilerError(f"patch_size {patch_size} does not fit a {image_w}x{image_h} image")
    if not 0.0 <= min_tissue_frac <= 1.0:
        raise TilerError(f"min_tissue_frac must be in [0,1], got {min_tissue_frac}")
    expected = (math.ceil(image_w / mask.scale), math.ceil(image_h / mask.scale))
    if (mask.width, mask.height) != expected:
        raise TilerError(
            f"mask dims ({mask.width}, {mask.height}) inconsistent with image {image_w}x{image_h} at scale {mask.scale}"
        )
    s = mask.scale
    coords: list[PatchCoord] = []
    for y in range(0, image_h - patch_size + 1, patch_size):
        my0 = y // s
        my1 = min(mask.height, math.ceil((y + patch_size) / s))
        for x in range(0, image_w - patch_size + 1, patch_size):
            mx0 = x // s
            mx1 = min(mask.width, math.ceil((x + patch_size) / s))
            window = mask.bits[my0:my1, mx0:mx1]
            frac = float(np.count_nonzero(window)) / window.size
            if frac >= min_tissue_frac:
                coords.append(PatchCoord(x=x, y=y, patch_size=patch_size))
    return coords


def crop_patch(image: np.ndarray, coord: PatchCoord) -> np.ndarray:
    """Pixel-exact copy of one patch."""
    image = validate_raster(image)
    h, w = image.shape[:2]
    if coord.x + coord.patch_size > w or coord.y + coord.patch_size > h:
        raise TilerError(f"patch {coord} exceeds {w}x{h} image bounds")
    return image[coord.y : coord.y + coord.patch_size, coord.x : coord.x + coord.patch_size].copy()


def full_mask(image_w: int, image_h: int, scale: int = 1) -> TissueMask:
    """All-true mask helper for mask-free tiling."""
    mw = math.ceil(image_w / scale)
    mh = math.ceil(image_h / scale)
    return TissueMask(width=mw, height=mh, bits=np.ones((mh, mw), dtype=bool), scale=scale)
