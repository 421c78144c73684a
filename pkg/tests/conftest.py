import os

# pin BLAS to one thread before numpy loads: the acceptance benchmark is
# specified single-threaded and results stay reproducible across machines
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS", "BLIS_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from milslide import FeatureBag, PatchCoord


def grid_coords(n: int, patch_size: int) -> tuple[PatchCoord, ...]:
    cols = int(np.ceil(np.sqrt(n)))
    return tuple(
        PatchCoord(x=(i % cols) * patch_size, y=(i // cols) * patch_size, patch_size=patch_size)
        for i in range(n)
    )


def random_bag(rng: np.random.Generator, n: int, d: int, patch_size: int = 16, slide_id: str = "bag") -> FeatureBag:
    return FeatureBag(
        slide_id=slide_id,
        patch_size=patch_size,
        coords=grid_coords(n, patch_size),
        features=rng.standard_normal((n, d)),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
