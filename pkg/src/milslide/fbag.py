"""The FBAG v1 feature-bag container.

One file per slide: the patch coordinate list and the N x D feature matrix.
Layout (little-endian, no compression):

    magic  4 bytes  "FBAG"
    u32    version  (1)
    u32    id_len
    bytes  slide_id (UTF-8, id_len bytes)
    u32    N        (patch count, >= 1)
    u32    D        (feature dimension, >= 1)
    u32    patch_size
    N x (i32 x, i32 y)
    N x D  IEEE-754 float32, row-major

Total file length must equal 24 + id_len + 8*N + 4*N*D exactly. Features
are float64 in memory and float32 on disk, so a write/read round trip
preserves coordinates and slide_id exactly and features to 32-bit
precision; rewriting a read bag is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tiler import PatchCoord

FBAG_MAGIC = b"FBAG"
FBAG_VERSION = 1
_HEADER_FIXED = 24  # magic + version + id_len + N + D + patch_size


class FbagError(ValueError):
    """Invalid bag content or malformed FBAG file."""


@dataclass(frozen=True)
class FeatureBag:
    """One slide's bag: coordinates plus per-patch feature vectors."""

    slide_id: str
    patch_size: int
    coords: tuple[PatchCoord, ...]
    features: np.ndarray  # (N, D) float64

    def __post_init__(self):
        if not self.slide_id:
            raise FbagError("slide_id must be non-empty")
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise FbagError(f"features must be a non-empty 2-D matrix, got shape {feats.shape}")
        if len(self.coords) != feats.shape[0]:
            raise FbagError(f"{len(self.coords)} coords for {feats.shape[0]} feature rows")
        if not np.isfinite(feats).all():
            raise FbagError(f"bag {self.slide_id!r} has non-finite feature values")
        for c in self.coords:
            if c.patch_size != self.patch_size:
                raise FbagError(f"coord {c} disagrees with bag patch_size {self.patch_size}")

    @property
    def n_patches(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def expected_file_size(id_len: int, n: int, d: int) -> int:
    return _HEADER_FIXED + id_len + 8 * n + 4 * n * d


def write_bag(bag: FeatureBag, path: str | Path) -> None:
    """Serialize to FBAG v1; rewriting the same bag is byte-identical."""
    if not np.isfinite(bag.features).all():
        raise FbagError(f"bag {bag.slide_id!r} has non-finite feature values")
    sid = bag.slide_id.encode("utf-8")
    n, d = bag.features.shape
    parts = [
        FBAG_MAGIC,
        struct.pack("<II", FBAG_VERSION, len(sid)),
        sid,
        struct.pack("<III", n, d, bag.patch_size),
    ]
    xy = np.empty((n, 2), dtype="<i4")
    xy[:, 0] = [c.x for c in bag.coords]
    xy[:, 1] = [c.y for c in bag.coords]
    parts.append(xy.tobytes())
    parts.append(bag.features.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_bag(path: str | Path) -> FeatureBag:
    """Parse an FBAG v1 file, validating magic, version and exact length."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 4 or blob[:4] != FBAG_MAGIC:
        if len(blob) < 4:
            raise FbagError(f"{path}: truncated file ({len(blob)} bytes)")
        raise FbagError(f"{path}: bad magic {blob[:4]!r}, expected {FBAG_MAGIC!r}")
    if len(blob) < 12:
        raise FbagError(f"{path}: truncated file ({len(blob)} bytes)")
    version, id_len = struct.unpack_from("<II", blob, 4)
    if version != FBAG_VERSION:
        raise FbagError(f"{path}: unsupported version {version}")
    if len(blob) < 12 + id_len + 12:
        raise FbagError(f"{path}: truncated header ({len(blob)} bytes)")
    sid = blob[12 : 12 + id_len].decode("utf-8")
    n, d, patch_size = struct.unpack_from("<III", blob, 12 + id_len)
    if n == 0 or d == 0:
        raise FbagError(f"{path}: N and D must be >= 1, got N={n} D={d}")
    expected = expected_file_size(id_len, n, d)
    if len(blob) != expected:
        kind = "truncated" if len(blob) < expected else "oversized"
        raise FbagError(f"{path}: {kind} file, {len(blob)} bytes but header implies {expected}")
    off = _HEADER_FIXED + id_len
    xy = np.frombuffer(blob, dtype="<i4", count=2 * n, offset=off).reshape(n, 2)
    feats = (
        np.frombuffer(blob, dtype="<f4", count=n * d, offset=off + 8 * n)
        .reshape(n, d)
        .astype(np.float64)
    )
    if not np.isfinite(feats).all():
        raise FbagError(f"{path}: non-finite feature values")
    try:
        coords = tuple(PatchCoord(x=int(x), y=int(y), patch_size=patch_size) for x, y in xy)
    except ValueError as exc:
        raise FbagError(f"{path}: invalid patch coordinate: {exc}") from exc
    return FeatureBag(slide_id=sid, patch_size=patch_size, coords=coords, features=feats)
