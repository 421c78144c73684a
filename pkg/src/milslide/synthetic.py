"""Synthetic witness benchmark generator.

Builds labeled feature bags with a planted signal: every instance is
standard normal per dimension, and positive bags carry a few "witness"
rows shifted by a constant in every dimension. An attention model that
works must find the witnesses, so pooled AUROC on this data is a cheap
end-to-end check of the whole training stack.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fbag import FeatureBag, write_bag
from .manifest import MANIFEST_HEADER, TaskSpec
from .tiler import PatchCoord

POSITIVE_LABEL = "positive"
NEGATIVE_LABEL = "negative"


def synthetic_task() -> TaskSpec:
    return TaskSpec(
        name="synthetic",
        positive_labels=frozenset({POSITIVE_LABEL}),
        negative_labels=frozenset({NEGATIVE_LABEL}),
    )


def _grid_coords(n_instances: int, patch_size: int) -> tuple[PatchCoord, ...]:
    # square-ish grid, row-major, so coords are valid and unique
    cols = int(np.ceil(np.sqrt(n_instances)))
    return tuple(
        PatchCoord(x=(i % cols) * patch_size, y=(i // cols) * patch_size, patch_size=patch_size)
        for i in range(n_instances)
    )


def make_synthetic_bags(
    n_bags: int = 200,
    n_instances: int = 64,
    dim: int = 32,
    witness_frac: float = 0.05,
    shift: float = 1.0,
    patch_size: int = 32,
    seed: int = 42,
) -> tuple[list[FeatureBag], list[int]]:
    """Generate bags with alternating labels (even index = negative).

    Positive bags get round(witness_frac * n_instances) witness rows,
    at least 1, shifted by +shift in every dimension.
    """
    if n_bags < 2 or n_instances < 1 or dim < 1:
        raise ValueError(f"need n_bags >= 2, n_instances >= 1, dim >= 1; got {n_bags}, {n_instances}, {dim}")
    if not 0.0 < witness_frac <= 1.0:
        raise ValueError(f"witness_frac must be in (0,1], got {witness_frac}")
    rng = np.random.default_rng(seed)
    n_witness = max(1, int(round(witness_frac * n_instances)))
    coords = _grid_coords(n_instances, patch_size)
    bags: list[FeatureBag] = []
    labels: list[int] = []
    for i in range(n_bags):
        label = i % 2
        features = rng.standard_normal((n_instances, dim))
        if label == 1:
            rows = rng.choice(n_instances, size=n_witness, replace=False)
            features[rows] += shift
        bags.append(
            FeatureBag(
                slide_id=f"synth_{i:03d}",
                patch_size=patch_size,
                coords=coords,
                features=features,
            )
        )
        labels.append(label)
    return bags, labels


def write_synthetic_dataset(
    out_dir: str | Path,
    n_bags: int = 200,
    n_instances: int = 64,
    dim: int = 32,
    witness_frac: float = 0.05,
    shift: float = 1.0,
    patch_size: int = 32,
    seed: int = 42,
) -> Path:
    """Write bags plus a manifest under out_dir; returns the manifest path.

    Bag paths in the manifest are relative to the manifest's directory,
    so the dataset directory can be moved as a unit.
    """
    out_dir = Path(out_dir)
    bag_dir = out_dir / "bags"
    bag_dir.mkdir(parents=True, exist_ok=True)
    bags, labels = make_synthetic_bags(
        n_bags=n_bags,
        n_instances=n_instances,
        dim=dim,
        witness_frac=witness_frac,
        shift=shift,
        patch_size=patch_size,
        seed=seed,
    )
    lines = [MANIFEST_HEADER]
    for bag, label in zip(bags, labels):
        rel = f"bags/{bag.slide_id}.fbag"
        write_bag(bag, out_dir / rel)
        raw = POSITIVE_LABEL if label == 1 else NEGATIVE_LABEL
        lines.append(f"{bag.slide_id},{rel},{raw}")
    manifest_path = out_dir / "manifest.csv"
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path
