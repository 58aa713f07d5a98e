import math

import numpy as np
import pytest

from texbank.corpus import GrayImage, build_pyramid
from texbank.descriptors import (
    DescriptorField,
    extract_dsift,
    extract_lbp,
    extract_patches,
    lbp_codes,
    load_descriptor_field,
    multiscale_collect,
    save_descriptor_field,
    subsample_field,
    LBP_UNIFORM_BINS,
)
from texbank.errors import FormatError

from conftest import random_image


def grid_law(size, rf, stride):
    return (size - rf) // stride + 1


class TestPatches:
    @pytest.mark.parametrize("size,dim", [(3, 9), (7, 49)])
    def test_patch_dims(self, rng, size, dim):
        field = extract_patches(random_image(rng, 12, 12), size)
        assert field.dim == dim

    def test_constant_image_constant_descriptors(self):
        field = extract_patches(GrayImage(np.full((6, 6), 0.25)), 3)
        assert np.all(field.data == 0.25)

    def test_ramp_windows_match_enumeration(self):
        px = np.arange(25, dtype=float).reshape(5, 5) / 24.0
        field = extract_patches(GrayImage(px), 3, stride=1)
        assert field.data.shape == (3, 3, 9)
        for y in range(3):
            for x in range(3):
                window = px[y : y + 3, x : x + 3].ravel()
                assert np.array_equal(field.data[y, x], window)

    def test_image_smaller_than_patch_raises(self, rng):
        with pytest.raises(ValueError):
            extract_patches(random_image(rng, 2, 2), 3)

    def test_grid_count_law(self, rng):
        field = extract_patches(random_image(rng, 17, 23), 7, stride=3)
        assert field.grid_h == grid_law(17, 7, 3)
        assert field.grid_w == grid_law(23, 7, 3)


class TestLbp:
    def test_bin_count(self, rng):
        field = extract_lbp(random_image(rng, 24, 24), radius=1.0, cell=8)
        assert LBP_UNIFORM_BINS == 58
        assert field.dim == 59

    def test_catchall_bin_can_be_dropped(self, rng):
        field = extract_lbp(
            random_image(rng, 24, 24), radius=1.0, cell=8, include_nonuniform_bin=False
        )
        assert field.dim == 58

    def test_constant_image_one_hot(self):
        img = GrayImage(np.full((20, 20), 0.5))
        field = extract_lbp(img, radius=1.0, cell=8)
        # all comparisons false -> code 0, a uniform pattern -> bin 0
        for desc in field.data.reshape(-1, field.dim):
            assert desc[0] == 1.0
            assert desc[1:].sum() == 0.0

    def test_codes_match_bit_oracle(self, rng):
        img = random_image(rng, 8, 8)
        codes = lbp_codes(img, radius=1.0)
        px = img.pixels
        for yy in range(codes.shape[0]):
            for xx in range(codes.shape[1]):
                y, x = yy + 1, xx + 1
                expected = 0
                for j in range(8):
                    theta = 2 * math.pi * j / 8
                    sy = y + math.sin(theta)
                    sx = x + math.cos(theta)
                    y0, x0 = int(math.floor(sy)), int(math.floor(sx))
                    fy, fx = sy - y0, sx - x0
                    y1, x1 = min(y0 + 1, 7), min(x0 + 1, 7)
                    val = (
                        px[y0, x0] * (1 - fx) * (1 - fy)
                        + px[y0, x1] * fx * (1 - fy)
                        + px[y1, x0] * (1 - fx) * fy
                        + px[y1, x1] * fx * fy
                    )
                    if px[y, x] > val:
                        expected |= 1 << j
                assert codes[yy, xx] == expected

    def test_checkerboard_codes(self):
        px = np.indices((4, 4)).sum(axis=0) % 2 * 1.0
        codes = lbp_codes(GrayImage(px), radius=1.0)
        # bright centers exceed the 4 axis neighbors (dark) but not the
        # diagonal samples, which interpolate to the center's own value
        assert codes.shape == (2, 2)
        bright = px[1:3, 1:3] == 1.0
        assert np.all((codes > 0) == bright)

    def test_monotone_affine_invariance(self, rng):
        img = random_image(rng, 10, 10)
        scaled = GrayImage(np.clip(0.5 * img.pixels + 0.2, 0, 1))
        assert np.array_equal(lbp_codes(img, 1.0), lbp_codes(scaled, 1.0))

    def test_radius_too_large_raises(self, rng):
        with pytest.raises(ValueError):
            lbp_codes(random_image(rng, 5, 5), radius=3.0)

    def test_histograms_l1_normalized(self, rng):
        field = extract_lbp(random_image(rng, 30, 30), radius=1.5, cell=8)
        sums = field.data.reshape(-1, field.dim).sum(axis=1)
        assert sums == pytest.approx(np.ones_like(sums))

    def test_grid_count_law(self, rng):
        field = extract_lbp(random_image(rng, 37, 29), radius=1.5, cell=6)
        assert field.grid_h == grid_law(37, field.receptive_field, field.stride)
        assert field.grid_w == grid_law(29, field.receptive_field, field.stride)


def dsift_oracle(px, x0, y0, bin_size=8):
    """Weight-matrix dense SIFT descriptor over one 40x40 patch."""
    n_orient, n_spatial = 8, 4
    rf = 5 * bin_size
    gy, gx = np.gradient(px)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx) % (2 * math.pi)
    o = theta * n_orient / (2 * math.pi)
    desc = np.zeros((n_spatial, n_spatial, n_orient))
    for py in range(y0, y0 + rf):
        for pxx in range(x0, x0 + rf):
            m = mag[py, pxx]
            if m == 0:
                continue
            ov = o[py, pxx]
            for by in range(n_spatial):
                cy = y0 + bin_size / 2 + (bin_size - 1) / 2 + by * bin_size
                wy = max(0.0, 1.0 - abs(py - cy) / bin_size)
                if wy == 0:
                    continue
                for bx in range(n_spatial):
                    cx = x0 + bin_size / 2 + (bin_size - 1) / 2 + bx * bin_size
                    wx = max(0.0, 1.0 - abs(pxx - cx) / bin_size)
                    if wx == 0:
                        continue
                    for b in range(n_orient):
                        d = abs(((ov - b + 4) % 8) - 4)
                        wo = max(0.0, 1.0 - d)
                        if wo > 0:
                            desc[by, bx, b] += m * wy * wx * wo
    v = desc.ravel()
    norm = np.linalg.norm(v)
    if norm > 0:
        v = v / norm
        v = np.minimum(v, 0.2)
        v = v / np.linalg.norm(v)
    return v


class TestDsift:
    def test_dimension_and_receptive_field(self, rng):
        field = extract_dsift(random_image(rng, 48, 48))
        assert field.dim == 128
        assert field.receptive_field == 40

    def test_constant_image_all_zero(self):
        field = extract_dsift(GrayImage(np.full((44, 44), 0.7)))
        assert np.all(field.data == 0.0)

    def test_norms_zero_or_one(self, rng):
        field = extract_dsift(random_image(rng, 52, 52))
        norms = np.linalg.norm(field.data.reshape(-1, 128), axis=1)
        for n in norms:
            assert n == pytest.approx(0.0, abs=1e-9) or n == pytest.approx(1.0, abs=1e-6)

    def test_matches_patch_oracle(self, rng):
        img = random_image(rng, 46, 50)
        field = extract_dsift(img, step=2)
        for gy_, gx_ in [(0, 0), (1, 2), (2, 1)]:
            expected = dsift_oracle(img.pixels, gx_ * 2, gy_ * 2)
            assert field.data[gy_, gx_] == pytest.approx(expected, abs=1e-10)

    def test_too_small_image_raises(self, rng):
        with pytest.raises(ValueError):
            extract_dsift(random_image(rng, 39, 60))

    def test_grid_count_law(self, rng):
        field = extract_dsift(random_image(rng, 50, 62), step=2)
        assert field.grid_h == grid_law(50, 40, 2)
        assert field.grid_w == grid_law(62, 40, 2)

    def test_rotation_equivariance(self, rng):
        # rotating the image 90 degrees shifts orientation bins by 2 and
        # transposes the spatial bins; exact for the centered descriptor
        px = rng.uniform(size=(44, 44))
        a = extract_dsift(GrayImage(px), step=2).data[1, 1].reshape(4, 4, 8)
        b = extract_dsift(GrayImage(np.rot90(px).copy()), step=2).data[1, 1].reshape(4, 4, 8)
        for by in range(4):
            for bx in range(4):
                for o in range(8):
                    assert b[by, bx, o] == pytest.approx(
                        a[bx, 3 - by, (o + 2) % 8], abs=1e-12
                    )


class TestFieldIO:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        data = rng.normal(size=(4, 5, 3)).astype(np.float32).astype(np.float64)
        field = DescriptorField(data, stride=2, offset=1, receptive_field=3, scale_factor=0.5)
        path = tmp_path / "f.txdf"
        save_descriptor_field(field, path)
        back = load_descriptor_field(path)
        assert np.array_equal(back.data, field.data)
        assert (back.stride, back.offset, back.receptive_field) == (2, 1, 3)
        assert back.scale_factor == field.scale_factor

    def test_truncated_file_rejected(self, rng, tmp_path):
        data = rng.normal(size=(4, 5, 3)).astype(np.float64)
        field = DescriptorField(data, stride=1, offset=0, receptive_field=1)
        path = tmp_path / "f.txdf"
        save_descriptor_field(field, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-7])
        with pytest.raises(FormatError):
            load_descriptor_field(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "f.txdf"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(FormatError):
            load_descriptor_field(path)

    def test_cnn_shaped_header(self, tmp_path, rng):
        # a conv5-style field: 512 channels on a small grid
        data = rng.normal(size=(3, 3, 512))
        field = DescriptorField(data, stride=16, offset=70, receptive_field=139)
        path = tmp_path / "conv5.txdf"
        save_descriptor_field(field, path)
        assert load_descriptor_field(path).dim == 512


class TestMultiscale:
    def test_single_level_equals_single_scale(self, rng):
        img = random_image(rng, 12, 12)
        pyr = build_pyramid(img, s_min=0.0, s_max=0.0, step=1.0)
        extractor = lambda im: extract_patches(im, 3)
        collected = multiscale_collect(pyr, extractor)
        direct = extract_patches(img, 3).as_sample()
        assert np.array_equal(collected.descriptors, direct.descriptors)
        assert np.array_equal(collected.positions, direct.positions)

    def test_two_levels_concatenate(self, rng):
        img = random_image(rng, 20, 20)
        pyr = build_pyramid(img, s_min=-1.0, s_max=0.0, step=1.0)
        extractor = lambda im: extract_patches(im, 3)
        collected = multiscale_collect(pyr, extractor)
        per_level = [len(extract_patches(im, 3).as_sample()) for _, im in pyr.levels]
        assert len(collected) == sum(per_level)

    def test_position_mapping_divides_by_factor(self, rng):
        img = random_image(rng, 40, 40)
        pyr = build_pyramid(img, s_min=-1.0, s_max=-1.0, step=1.0)
        extractor = lambda im: extract_patches(im, 3)
        collected = multiscale_collect(pyr, extractor)
        field = extract_patches(pyr.levels[0][1], 3)
        level_positions = field.descriptor_positions()
        assert np.array_equal(collected.positions[:, :2], level_positions / 0.5)
        assert np.all(collected.positions[:, 2] == 0.5)


def test_subsample_field_geometry(rng):
    field = extract_patches(random_image(rng, 20, 20), 3)
    sub = subsample_field(field, 3)
    assert sub.stride == 3
    assert np.array_equal(sub.data, field.data[::3, ::3])


def test_sample_subset_keeps_pairs(rng):
    field = extract_patches(random_image(rng, 8, 8), 3)
    sample = field.as_sample()
    mask = np.zeros(len(sample), dtype=bool)
    mask[::2] = True
    sub = sample.subset(mask)
    assert np.array_equal(sub.descriptors, sample.descriptors[mask])
    assert np.array_equal(sub.positions, sample.positions[mask])
