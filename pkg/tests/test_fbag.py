import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from milslide import FbagError, FeatureBag, PatchCoord, read_bag, write_bag
from milslide.fbag import expected_file_size

from conftest import random_bag


def roundtrip(tmp_path, bag, name="b.fbag"):
    p = tmp_path / name
    write_bag(bag, p)
    return p, read_bag(p)


class TestLayout:
    def test_file_size_law(self, tmp_path, rng):
        for n, d, sid in [(1, 1, "a"), (3, 5, "slide_01"), (10, 32, "x" * 40)]:
            bag = random_bag(rng, n, d, slide_id=sid)
            p = tmp_path / "b.fbag"
            write_bag(bag, p)
            assert p.stat().st_size == expected_file_size(len(sid.encode()), n, d) == 24 + len(sid.encode()) + 8 * n + 4 * n * d

    def test_exact_bytes_of_minimal_bag(self, tmp_path):
        bag = FeatureBag(
            slide_id="s1",
            patch_size=224,
            coords=(PatchCoord(224, 448, 224),),
            features=np.array([[1.5, -2.0]]),
        )
        p = tmp_path / "b.fbag"
        write_bag(bag, p)
        expected = (
            b"FBAG"
            + struct.pack("<II", 1, 2)
            + b"s1"
            + struct.pack("<III", 1, 2, 224)
            + struct.pack("<ii", 224, 448)
            + struct.pack("<ff", 1.5, -2.0)
        )
        assert p.read_bytes() == expected

    def test_utf8_slide_id(self, tmp_path, rng):
        sid = "пример_slide_Ω"
        _, back = roundtrip(tmp_path, random_bag(rng, 2, 3, slide_id=sid))
        assert back.slide_id == sid


class TestRoundTrip:
    def test_write_read_write_byte_identical(self, tmp_path, rng):
        for i in range(20):
            n = int(rng.integers(1, 30))
            d = int(rng.integers(1, 20))
            bag = random_bag(rng, n, d, slide_id=f"s{i}")
            p1, back = roundtrip(tmp_path, bag, "a.fbag")
            p2 = tmp_path / "b2.fbag"
            write_bag(back, p2)
            assert p1.read_bytes() == p2.read_bytes()

    def test_values_and_coords_survive(self, tmp_path, rng):
        bag = random_bag(rng, 5, 7, patch_size=64, slide_id="s")
        _, back = roundtrip(tmp_path, bag)
        assert back.patch_size == 64
        assert back.coords == bag.coords
        assert np.array_equal(back.features, bag.features.astype(np.float32).astype(np.float64))

    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_property_round_trip(self, tmp_path_factory, n, d, seed):
        rng = np.random.default_rng(seed)
        bag = random_bag(rng, n, d, slide_id=f"h{seed}")
        tmp = tmp_path_factory.mktemp("fbag")
        _, back = roundtrip(tmp, bag)
        assert back.n_patches == n and back.dim == d


class TestValidation:
    def test_empty_bag_rejected(self):
        with pytest.raises(FbagError, match="non-empty"):
            FeatureBag(slide_id="s", patch_size=8, coords=(), features=np.empty((0, 4)))

    def test_coord_count_mismatch(self):
        with pytest.raises(FbagError, match="coords"):
            FeatureBag(slide_id="s", patch_size=8, coords=(PatchCoord(0, 0, 8),), features=np.zeros((2, 4)))

    def test_nan_rejected(self):
        feats = np.zeros((1, 4))
        feats[0, 0] = np.nan
        with pytest.raises(FbagError, match="non-finite"):
            FeatureBag(slide_id="s", patch_size=8, coords=(PatchCoord(0, 0, 8),), features=feats)

    def test_patch_size_disagreement(self):
        with pytest.raises(FbagError, match="patch_size"):
            FeatureBag(slide_id="s", patch_size=16, coords=(PatchCoord(0, 0, 8),), features=np.zeros((1, 4)))

    def test_empty_slide_id(self):
        with pytest.raises(FbagError, match="slide_id"):
            FeatureBag(slide_id="", patch_size=8, coords=(PatchCoord(0, 0, 8),), features=np.zeros((1, 4)))


class TestMalformedFiles:
    def make_valid(self, tmp_path, rng):
        p = tmp_path / "v.fbag"
        write_bag(random_bag(rng, 3, 4, slide_id="sl"), p)
        return p

    def test_bad_magic(self, tmp_path, rng):
        p = self.make_valid(tmp_path, rng)
        blob = bytearray(p.read_bytes())
        blob[:4] = b"XBAG"
        p.write_bytes(bytes(blob))
        with pytest.raises(FbagError, match="magic"):
            read_bag(p)

    def test_bad_version(self, tmp_path, rng):
        p = self.make_valid(tmp_path, rng)
        blob = bytearray(p.read_bytes())
        blob[4:8] = struct.pack("<I", 9)
        p.write_bytes(bytes(blob))
        with pytest.raises(FbagError, match="version"):
            read_bag(p)

    def test_truncated(self, tmp_path, rng):
        p = self.make_valid(tmp_path, rng)
        blob = p.read_bytes()
        for cut in [3, 10, len(blob) // 2, len(blob) - 1]:
            p.write_bytes(blob[:cut])
            with pytest.raises(FbagError, match="truncated"):
                read_bag(p)

    def test_oversized(self, tmp_path, rng):
        p = self.make_valid(tmp_path, rng)
        p.write_bytes(p.read_bytes() + b"\x00\x00")
        with pytest.raises(FbagError, match="oversized"):
            read_bag(p)

    def test_zero_patches_rejected(self, tmp_path):
        blob = b"FBAG" + struct.pack("<II", 1, 1) + b"s" + struct.pack("<III", 0, 4, 8)
        p = tmp_path / "z.fbag"
        p.write_bytes(blob)
        with pytest.raises(FbagError, match="N and D"):
            read_bag(p)

    def test_zero_dim_rejected(self, tmp_path):
        blob = b"FBAG" + struct.pack("<II", 1, 1) + b"s" + struct.pack("<III", 2, 0, 8)
        p = tmp_path / "z.fbag"
        p.write_bytes(blob)
        with pytest.raises(FbagError, match="N and D"):
            read_bag(p)

    def test_negative_coord_in_file(self, tmp_path, rng):
        p = self.make_valid(tmp_path, rng)
        blob = bytearray(p.read_bytes())
        off = 24 + 2  # first coord x, id_len=2
        blob[off : off + 4] = struct.pack("<i", -5)
        p.write_bytes(bytes(blob))
        with pytest.raises(FbagError, match="coordinate"):
            read_bag(p)

    def test_nan_feature_in_file(self, tmp_path, rng):
        p = self.make_valid(tmp_path, rng)
        blob = bytearray(p.read_bytes())
        off = 24 + 2 + 8 * 3  # first feature value
        blob[off : off + 4] = struct.pack("<f", float("nan"))
        p.write_bytes(bytes(blob))
        with pytest.raises(FbagError, match="non-finite"):
            read_bag(p)

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_bag(tmp_path / "missing.fbag")
