"""Dense local descriptor extraction and descriptor-field ingestion.

Every extractor walks a regular grid over the image and produces a
DescriptorField: a (grid_h, grid_w, dim) block of descriptors plus the
geometry (stride, offset of the first descriptor center, receptive field,
scale factor) needed to map grid cells back to pixel coordinates.
Precomputed fields, e.g. CNN activations exported by some other tool, are
ingested from the TXDF binary format and only validated here.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import correlate1d

from ._arrayio import read_exact, read_u32, write_u32
from .corpus import GrayImage, ScalePyramid
from .errors import FormatError

TXDF_MAGIC = b"TXDF"
TXDF_VERSION = 1

DSIFT_CLAMP = 0.2


@dataclass(frozen=True)
class DescriptorField:
    """Dense grid of local descriptors with its pixel geometry.

    data has shape (grid_h, grid_w, dim). The descriptor at grid cell
    (ix, iy) is centered at pixel (offset + ix*stride, offset + iy*stride)
    of the image it was extracted from.
    """

    data: np.ndarray
    stride: int
    offset: int
    receptive_field: int
    scale_factor: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("descriptor field data must be (grid_h, grid_w, dim)")
        if not np.all(np.isfinite(data)):
            raise ValueError("descriptor field contains non-finite values")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "data", data)

    @property
    def grid_h(self) -> int:
        return self.data.shape[0]

    @property
    def grid_w(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def descriptor_positions(self) -> np.ndarray:
        """(n, 2) array of (x, y) descriptor centers in level coordinates."""
        ys, xs = np.mgrid[0 : self.grid_h, 0 : self.grid_w]
        px = self.offset + xs * self.stride
        py = self.offset + ys * self.stride
        return np.stack([px.ravel(), py.ravel()], axis=1).astype(np.float64)

    def as_sample(self) -> "DescriptorSample":
        """Flatten to a sample; positions are mapped to original-image
        coordinates by dividing by the scale factor."""
        pos = self.descriptor_positions() / self.scale_factor
        scale = np.full((pos.shape[0], 1), self.scale_factor)
        return DescriptorSample(
            self.data.reshape(-1, self.dim),
            np.hstack([pos, scale]),
        )


@dataclass(frozen=True)
class DescriptorSample:
    """A sequence of descriptors with (x, y, scale) positions."""

    descriptors: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        desc = np.asarray(self.descriptors, dtype=np.float64)
        pos = np.asarray(self.positions, dtype=np.float64)
        if desc.ndim != 2:
            raise ValueError("descriptors must be a (n, dim) array")
        if pos.shape != (desc.shape[0], 3):
            raise ValueError("positions must be (n, 3) of (x, y, scale)")
        object.__setattr__(self, "descriptors", desc)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def subset(self, mask: np.ndarray) -> "DescriptorSample":
        return DescriptorSample(self.descriptors[mask], self.positions[mask])


def concat_samples(samples: list[DescriptorSample]) -> DescriptorSample:
    if not samples:
        raise ValueError("no samples to concatenate")
    return DescriptorSample(
        np.vstack([s.descriptors for s in samples]),
        np.vstack([s.positions for s in samples]),
    )


def extract_patches(img: GrayImage, size: int, stride: int = 1) -> DescriptorField:
    """Raw size x size intensity patches, row-major, as descriptors."""
    if size % 2 == 0 or size < 1:
        raise ValueError("patch size must be odd")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if img.width < size or img.height < size:
        raise ValueError("image smaller than patch size")
    windows = sliding_window_view(img.pixels, (size, size))[::stride, ::stride]
    gh, gw = windows.shape[:2]
    data = windows.reshape(gh, gw, size * size).copy()
    return DescriptorField(data, stride=stride, offset=(size - 1) // 2, receptive_field=size)


def _uniform_lbp_table(bits: int = 8) -> np.ndarray:
    """Map each code to a bin: uniform patterns (<= 2 circular transitions)
    get their own bin in ascending code order, the rest share a final bin."""
    codes = np.arange(2**bits)
    rotated = ((codes << 1) | (codes >> (bits - 1))) & (2**bits - 1)
    transitions = np.array([bin(int(c)).count("1") for c in codes ^ rotated])
    table = np.empty(2**bits, dtype=np.int64)
    uniform = np.flatnonzero(transitions <= 2)
    table[uniform] = np.arange(uniform.size)
    table[transitions > 2] = uniform.size
    return table


_LBP_TABLE = _uniform_lbp_table(8)
LBP_UNIFORM_BINS = int(_LBP_TABLE.max())  # 58 uniform patterns for 8 neighbors


def _bilinear_at(px: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = px.shape
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    # a + t*(b - a) lerp form: exact when the corner values coincide, so a
    # constant image samples to exactly the constant.
    top = px[y0, x0] + fx * (px[y0, x1] - px[y0, x0])
    bot = px[y1, x0] + fx * (px[y1, x1] - px[y1, x0])
    return top + fy * (bot - top)


def lbp_codes(img: GrayImage, radius: float, neighbors: int = 8) -> np.ndarray:
    """Per-pixel codes over the valid interior; bit j set when the center is
    strictly brighter than the bilinearly sampled neighbor j."""
    if neighbors != 8:
        raise ValueError("only 8 circular neighbors are supported")
    if radius <= 0:
        raise ValueError("radius must be positive")
    m = int(math.ceil(radius))
    h, w = img.pixels.shape
    if h <= 2 * m or w <= 2 * m:
        raise ValueError("radius too large for image")
    ys, xs = np.mgrid[m : h - m, m : w - m]
    center = img.pixels[m : h - m, m : w - m]
    codes = np.zeros(center.shape, dtype=np.int64)
    for j in range(neighbors):
        theta = 2.0 * math.pi * j / neighbors
        sample = _bilinear_at(
            img.pixels, ys + radius * math.sin(theta), xs + radius * math.cos(theta)
        )
        codes |= (center > sample).astype(np.int64) << j
    return codes


def extract_lbp(
    img: GrayImage,
    radius: float = 1.0,
    neighbors: int = 8,
    cell: int = 8,
    include_nonuniform_bin: bool = True,
) -> DescriptorField:
    """Uniform-pattern code histograms over non-overlapping cells.

    Each cell yields an L1-normalized histogram with 58 uniform bins plus,
    by default, one catch-all bin for non-uniform codes (59-D total).
    """
    if cell < radius:
        raise ValueError("cell must be at least the radius")
    codes = lbp_codes(img, radius, neighbors)
    bins = _LBP_TABLE[codes]
    m = int(math.ceil(radius))
    vh, vw = bins.shape
    gh, gw = vh // cell, vw // cell
    if gh < 1 or gw < 1:
        raise ValueError("image too small for one LBP cell")
    n_bins = LBP_UNIFORM_BINS + 1
    tiles = bins[: gh * cell, : gw * cell].reshape(gh, cell, gw, cell).transpose(0, 2, 1, 3)
    flat = tiles.reshape(gh * gw, cell * cell)
    hist = np.zeros((gh * gw, n_bins), dtype=np.float64)
    for b in range(n_bins):
        hist[:, b] = (flat == b).sum(axis=1)
    if not include_nonuniform_bin:
        hist = hist[:, :LBP_UNIFORM_BINS]
    sums = hist.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    hist /= sums
    data = hist.reshape(gh, gw, hist.shape[1])
    return DescriptorField(
        data,
        stride=cell,
        offset=m + (cell - 1) // 2,
        receptive_field=cell + 2 * m,
    )


def extract_dsift(img: GrayImage, step: int = 2, bin_size: int = 8) -> DescriptorField:
    """Dense SIFT: 4x4 spatial bins x 8 orientations, bilinear interpolation
    in space and orientation, value clamp at 0.2 with renormalization.

    The support is 5*bin_size per side (the 4-bin grid plus a half-bin
    border reached by the bilinear weights). Zero-gradient descriptors stay
    zero vectors.
    """
    if bin_size < 2 or bin_size % 2 != 0:
        raise ValueError("bin_size must be even and >= 2")
    if step < 1:
        raise ValueError("step must be >= 1")
    n_spatial = 4
    n_orient = 8
    rf = (n_spatial + 1) * bin_size
    h, w = img.pixels.shape
    if h < rf or w < rf:
        raise ValueError(f"image smaller than the {rf}x{rf} descriptor support")

    gy, gx = np.gradient(img.pixels)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx) % (2.0 * math.pi)
    o = theta * (n_orient / (2.0 * math.pi))

    # Triangle taps centered on the half-integer bin centers.
    d = np.arange(1 - bin_size, bin_size + 1, dtype=np.float64)
    taps = np.clip(1.0 - np.abs(d - 0.5) / bin_size, 0.0, None)

    grid_w = (w - rf) // step + 1
    grid_h = (h - rf) // step + 1
    feats = np.zeros((grid_h, grid_w, n_spatial, n_spatial, n_orient))
    for b in range(n_orient):
        circ = np.abs(((o - b + n_orient / 2) % n_orient) - n_orient / 2)
        chan = mag * np.clip(1.0 - circ, 0.0, None)
        # origin=-1 aligns the even-length kernel so taps[j] multiplies the
        # pixel at offset j - (bin_size - 1) from the output index.
        pooled = correlate1d(chan, taps, axis=0, mode="constant", origin=-1)
        pooled = correlate1d(pooled, taps, axis=1, mode="constant", origin=-1)
        for by in range(n_spatial):
            qy = bin_size - 1 + by * bin_size
            rows = pooled[qy : qy + (grid_h - 1) * step + 1 : step]
            for bx in range(n_spatial):
                qx = bin_size - 1 + bx * bin_size
                feats[:, :, by, bx, b] = rows[:, qx : qx + (grid_w - 1) * step + 1 : step]

    data = feats.reshape(grid_h, grid_w, n_spatial * n_spatial * n_orient)
    norms = np.linalg.norm(data, axis=2, keepdims=True)
    nz = norms[:, :, 0] > 0
    data[nz] /= norms[nz]
    np.minimum(data, DSIFT_CLAMP, out=data)
    norms = np.linalg.norm(data, axis=2, keepdims=True)
    data[nz] /= norms[nz]
    return DescriptorField(data, stride=step, offset=rf // 2, receptive_field=rf)


def save_descriptor_field(field: DescriptorField, path: str | Path) -> None:
    """Write a field in the TXDF binary format (little-endian, float32 data,
    row-major with the channel index fastest)."""
    with open(path, "wb") as f:
        f.write(TXDF_MAGIC)
        write_u32(f, TXDF_VERSION)
        for v in (
            field.grid_w,
            field.grid_h,
            field.dim,
            field.stride,
            field.offset,
            field.receptive_field,
        ):
            write_u32(f, v)
        f.write(struct.pack("<f", field.scale_factor))
        f.write(field.data.astype("<f4").tobytes())


def load_descriptor_field(path: str | Path) -> DescriptorField:
    """Load and validate a TXDF descriptor field."""
    with open(path, "rb") as f:
        if read_exact(f, 4) != TXDF_MAGIC:
            raise FormatError(f"{path}: bad magic, not a TXDF file")
        version = read_u32(f)
        if version != TXDF_VERSION:
            raise FormatError(f"{path}: unsupported TXDF version {version}")
        grid_w = read_u32(f)
        grid_h = read_u32(f)
        dim = read_u32(f)
        stride = read_u32(f)
        offset = read_u32(f)
        rf = read_u32(f)
        scale = struct.unpack("<f", read_exact(f, 4))[0]
        count = grid_h * grid_w * dim
        raw = read_exact(f, 4 * count)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after descriptor data")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(grid_h, grid_w, dim)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite descriptor values")
    if stride < 1 or scale <= 0:
        raise FormatError(f"{path}: invalid geometry (stride {stride}, scale {scale})")
    return DescriptorField(data, stride=stride, offset=offset, receptive_field=rf, scale_factor=scale)


def subsample_field(field: DescriptorField, step: int) -> DescriptorField:
    """Keep every step-th grid cell in both directions."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if step == 1:
        return field
    return replace(field, data=field.data[::step, ::step], stride=field.stride * step)


Extractor = Callable[[GrayImage], DescriptorField]


def multiscale_collect(pyramid: ScalePyramid, extractor: Extractor) -> DescriptorSample:
    """Run the extractor on every pyramid level and pool the descriptors,
    mapping positions back to original-image coordinates."""
    parts = []
    for factor, level in pyramid.levels:
        field = extractor(level)
        field = replace(field, scale_factor=factor)
        parts.append(field.as_sample())
    return concat_samples(parts)
