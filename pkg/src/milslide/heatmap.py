"""Attention heatmap rendering.

Turns per-patch attention into a red overlay on a slide thumbnail.
Attention over thousands of patches is heavy-tailed, so values are
percentile-clipped (nearest-rank) and min-max scaled before blending;
otherwise the overlay is nearly uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tiler import PatchCoord, validate_raster


class HeatmapError(ValueError):
    pass


@dataclass(frozen=True)
class HeatmapParams:
    clip_lo: float = 1.0
    clip_hi: float = 99.0
    max_alpha: float = 0.6
    thumbnail_scale: float = 1.0  # full-res pixels per thumbnail pixel

    def __post_init__(self):
        if not 0.0 <= self.clip_lo < self.clip_hi <= 100.0:
            raise HeatmapError(
                f"need 0 <= clip_lo < clip_hi <= 100, got ({self.clip_lo}, {self.clip_hi})"
            )
        if not 0.0 <= self.max_alpha <= 1.0:
            raise HeatmapError(f"max_alpha must be in [0,1], got {self.max_alpha}")
        if self.thumbnail_scale <= 0.0:
            raise HeatmapError(f"thumbnail_scale must be > 0, got {self.thumbnail_scale}")


def nearest_rank_percentile(sorted_values: np.ndarray, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest, rank >= 1."""
    n = len(sorted_values)
    rank = max(1, int(np.ceil(p / 100.0 * n)))
    return float(sorted_values[rank - 1])


def normalize_attention(attention, params: HeatmapParams = HeatmapParams()) -> np.ndarray:
    """Clip to the [clip_lo, clip_hi] percentile range, then min-max to [0,1].

    A degenerate clipped range (all values equal) maps everything to 0.5.
    """
    a = np.asarray(attention, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise HeatmapError(f"attention must be a non-empty 1-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise HeatmapError("attention must be finite and non-negative")
    ordered = np.sort(a)
    lo = nearest_rank_percentile(ordered, params.clip_lo)
    hi = nearest_rank_percentile(ordered, params.clip_hi)
    if hi <= lo:
        return np.full(a.shape, 0.5)
    clipped = np.clip(a, lo, hi)
    return (clipped - lo) / (hi - lo)


def _thumb_rect(coord: PatchCoord, scale: float, width: int, height: int) -> tuple[int, int, int, int]:
    x0 = int(np.floor(coord.x / scale))
    y0 = int(np.floor(coord.y / scale))
    x1 = int(np.floor((coord.x + coord.patch_size) / scale))
    y1 = int(np.floor((coord.y + coord.patch_size) / scale))
    if x1 > width or y1 > height:
        raise HeatmapError(
            f"patch at ({coord.x},{coord.y}) size {coord.patch_size} maps to "
            f"({x0},{y0})..({x1},{y1}) outside {width}x{height} thumbnail at scale {scale}"
        )
    return x0, y0, x1, y1


def render_heatmap(
    thumbnail: np.ndarray,
    coords,
    values,
    params: HeatmapParams = HeatmapParams(),
) -> np.ndarray:
    """Alpha-blend pure red over each patch rectangle.

    Per pixel: c' = round((1-alpha)*c + alpha*c_red), alpha = value*max_alpha,
    round half up. Overlapping rectangles take the last coord's value.
    Pixels outside every rectangle are copied bit for bit.
    """
    validate_raster(thumbnail)
    vals = np.asarray(values, dtype=np.float64)
    coords = list(coords)
    if vals.ndim != 1 or len(coords) != vals.size:
        raise HeatmapError(f"got {len(coords)} coords but {vals.size} values")
    if vals.size and (not np.all(np.isfinite(vals)) or np.any(vals < 0) or np.any(vals > 1)):
        raise HeatmapError("values must be finite and in [0,1]")
    height, width = thumbnail.shape[:2]
    alpha = np.zeros((height, width), dtype=np.float64)
    touched = np.zeros((height, width), dtype=bool)
    for coord, v in zip(coords, vals):
        x0, y0, x1, y1 = _thumb_rect(coord, params.thumbnail_scale, width, height)
        alpha[y0:y1, x0:x1] = v * params.max_alpha
        touched[y0:y1, x0:x1] = True
    out = thumbnail.copy()
    if not touched.any():
        return out
    red = np.array([255.0, 0.0, 0.0])
    a = alpha[touched][:, None]
    blended = (1.0 - a) * thumbnail[touched].astype(np.float64) + a * red
    out[touched] = np.floor(blended + 0.5).astype(np.uint8)
    return out
