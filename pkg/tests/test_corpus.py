import numpy as np
import pytest
from PIL import Image

from texbank.corpus import (
    GrayImage,
    build_pyramid,
    load_image,
    load_manifest,
    parse_manifest,
    save_image,
    scale_factors,
)
from texbank.errors import FormatError

from conftest import random_image


def _write_png(path, array, mode="L"):
    Image.fromarray(array, mode=mode).save(path)


class TestLoadImage:
    def test_all_white_saturates_to_one(self, tmp_path):
        path = tmp_path / "white.png"
        _write_png(path, np.full((2, 2), 255, dtype=np.uint8))
        img = load_image(path)
        assert img.pixels.shape == (2, 2)
        assert np.all(img.pixels == 1.0)

    def test_mid_gray_scales_linearly(self, tmp_path):
        path = tmp_path / "mid.png"
        _write_png(path, np.full((1, 1), 128, dtype=np.uint8))
        img = load_image(path)
        assert img.pixels[0, 0] == pytest.approx(128 / 255)

    def test_pure_red_uses_luma_weights(self, tmp_path):
        path = tmp_path / "red.png"
        rgb = np.zeros((1, 1, 3), dtype=np.uint8)
        rgb[0, 0, 0] = 255
        _write_png(path, rgb, mode="RGB")
        img = load_image(path)
        # hand check: 0.299*1 + 0.587*0 + 0.114*0
        assert img.pixels[0, 0] == pytest.approx(0.299, abs=1e-12)

    def test_unreadable_file_raises(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(FormatError):
            load_image(path)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    @pytest.mark.parametrize("ext", ["png", "pgm", "ppm"])
    def test_supported_formats(self, tmp_path, ext):
        path = tmp_path / f"img.{ext}"
        if ext == "ppm":
            arr = np.full((3, 4, 3), 100, dtype=np.uint8)
            Image.fromarray(arr, mode="RGB").save(path)
        else:
            arr = np.full((3, 4), 100, dtype=np.uint8)
            Image.fromarray(arr, mode="L").save(path)
        img = load_image(path)
        assert (img.height, img.width) == (3, 4)

    def test_round_trip_within_one_level(self, tmp_path, rng):
        img = random_image(rng, 9, 13)
        path = tmp_path / "rt.png"
        save_image(img, path)
        back = load_image(path)
        assert np.abs(back.pixels - img.pixels).max() <= 1.0 / 255 + 1e-12


class TestGrayImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            GrayImage(np.array([[1.5]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            GrayImage(np.array([[np.nan]]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros((0, 3)))


class TestBuildPyramid:
    def test_default_progression_has_ten_levels(self, rng):
        img = random_image(rng, 100, 100)
        pyr = build_pyramid(img)
        factors = [f for f, _ in pyr.levels]
        assert len(factors) == 10
        assert factors[0] == pytest.approx(2.0**-3)
        assert factors[-1] == pytest.approx(2.0**1.5)

    def test_area_cap_drops_larger_levels(self, rng):
        img = random_image(rng, 64, 64)
        cap = 64 * 64
        pyr = build_pyramid(img, max_area=cap)
        # oracle: per-level area arithmetic
        expected = []
        for f in scale_factors(-3.0, 1.5, 0.5):
            w = max(1, round(64 * f))
            h = max(1, round(64 * f))
            if w * h <= cap:
                expected.append(f)
        assert [f for f, _ in pyr.levels] == pytest.approx(expected)
        # the factor-1 level sits exactly at the cap and is retained
        assert any(abs(f - 1.0) < 1e-12 for f, _ in pyr.levels)
        assert all(img2.width * img2.height <= cap for _, img2 in pyr.levels)

    def test_identity_level_is_pixel_identical(self, rng):
        img = random_image(rng, 37, 23)
        pyr = build_pyramid(img, s_min=0.0, s_max=0.0, step=0.5)
        assert len(pyr.levels) == 1
        factor, level = pyr.levels[0]
        assert factor == 1.0
        assert np.array_equal(level.pixels, img.pixels)

    def test_areas_increase_with_factor(self, rng):
        img = random_image(rng, 100, 80)
        pyr = build_pyramid(img)
        areas = [im.width * im.height for _, im in pyr.levels]
        assert all(b > a for a, b in zip(areas, areas[1:]))

    def test_all_levels_above_cap_raises(self, rng):
        img = random_image(rng, 100, 100)
        with pytest.raises(ValueError):
            build_pyramid(img, s_min=1.0, s_max=1.5, step=0.5, max_area=100)


class TestManifest:
    def test_basic_parse(self):
        text = "a.png\tbanded\ttrain\nb.png\tbanded,dotted\tval\n# comment\nc.png\tdotted\ttest\n"
        m = parse_manifest(text)
        assert len(m.entries) == 3
        assert m.vocabulary == ("banded", "dotted")
        assert m.entries[1].labels == ("banded", "dotted")

    def test_unknown_split_rejected(self):
        with pytest.raises(FormatError, match="split"):
            parse_manifest("a.png\tx\tfoo\n")

    def test_duplicate_image_rejected(self):
        with pytest.raises(FormatError, match="duplicate"):
            parse_manifest("a.png\tx\ttrain\na.png\ty\ttest\n")

    def test_dangling_mask_rejected(self, tmp_path):
        with pytest.raises(FormatError, match="mask"):
            parse_manifest("a.png\tx\ttrain\tmissing_mask.pgm\n", base_dir=tmp_path)

    def test_mask_path_accepted_when_present(self, tmp_path):
        (tmp_path / "m.pgm").write_bytes(b"P5\n1 1\n255\n\x00")
        m = parse_manifest("a.png\tx\ttrain\tm.pgm\n", base_dir=tmp_path)
        assert m.entries[0].mask_path == "m.pgm"

    def test_dtd_shaped_manifest_counts(self, tmp_path):
        lines = []
        splits = ["train", "val", "test"]
        for ci in range(47):
            for ii in range(120):
                lines.append(f"img_{ci}_{ii}.png\tclass{ci:02d}\t{splits[ii % 3]}")
        m = parse_manifest("\n".join(lines))
        assert len(m.vocabulary) == 47
        for split in splits:
            assert len(m.split_entries(split)) == 1880

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("a.png\tx\ttrain\n", encoding="utf-8")
        m = load_manifest(path)
        assert m.entries[0].image_path == "a.png"
