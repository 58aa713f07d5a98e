"""Linear texture filter banks and their dense response fields.

Two classic banks are provided. The LM bank has 48 kernels: first and
second Gaussian derivatives at 6 orientations and 3 scales (36 kernels),
8 Laplacian-of-Gaussian kernels, and 4 Gaussians. The MR bank has 38:
edge and bar kernels at 6 orientations and 3 scales plus one isotropic
Gaussian and one LoG; collapsing each oriented family/scale group to its
per-pixel maximum yields 8 response channels.

Oriented kernels use the conventional 3:1 elongation. Derivative and LoG
kernels are shifted to zero mean; all kernels are L1-normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

from .corpus import GrayImage
from .descriptors import DescriptorField

FAMILY_EDGE = "edge"
FAMILY_BAR = "bar"
FAMILY_LOG = "log"
FAMILY_GAUSSIAN = "gaussian"

ORIENTED_FAMILIES = (FAMILY_EDGE, FAMILY_BAR)


@dataclass(frozen=True)
class KernelMeta:
    family: str
    scale: int
    orientation: int | None = None


@dataclass(frozen=True)
class FilterBank:
    """A stack of square odd-support kernels with per-kernel metadata."""

    kernels: np.ndarray
    meta: tuple[KernelMeta, ...]

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        if k.ndim != 3 or k.shape[1] != k.shape[2] or k.shape[1] % 2 == 0:
            raise ValueError("kernels must be a stack of odd square filters")
        if len(self.meta) != k.shape[0]:
            raise ValueError("one metadata record per kernel required")
        object.__setattr__(self, "kernels", k)

    @property
    def size(self) -> int:
        return self.kernels.shape[0]

    @property
    def support(self) -> int:
        return self.kernels.shape[1]


@dataclass(frozen=True)
class FilterResponseField:
    """Valid-region correlation responses, shape (height, width, channels)."""

    responses: np.ndarray
    meta: tuple[KernelMeta, ...]
    support: int

    def __post_init__(self):
        r = np.asarray(self.responses, dtype=np.float64)
        if r.ndim != 3:
            raise ValueError("responses must be (height, width, channels)")
        if r.shape[2] != len(self.meta):
            raise ValueError("channel count must match kernel metadata")
        if not np.all(np.isfinite(r)):
            raise ValueError("responses contain non-finite values")
        object.__setattr__(self, "responses", r)

    @property
    def channels(self) -> int:
        return self.responses.shape[2]


def _gauss1d(x: np.ndarray, sigma: float, order: int) -> np.ndarray:
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    if order == 0:
        return g
    if order == 1:
        return -g * x / sigma**2
    if order == 2:
        return g * (x**2 - sigma**2) / sigma**4
    raise ValueError("derivative order must be 0, 1 or 2")


def _grid(support: int) -> tuple[np.ndarray, np.ndarray]:
    half = (support - 1) // 2
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1]
    return xs.astype(np.float64), ys.astype(np.float64)


def _normalize(kernel: np.ndarray, zero_mean: bool) -> np.ndarray:
    if zero_mean:
        kernel = kernel - kernel.mean()
    return kernel / np.abs(kernel).sum()


def _oriented_kernel(support: int, sigma: float, theta: float, order: int) -> np.ndarray:
    xs, ys = _grid(support)
    c, s = math.cos(theta), math.sin(theta)
    u = c * xs + s * ys  # along the filter orientation
    v = -s * xs + c * ys  # across it; the derivative axis
    kernel = _gauss1d(u, 3.0 * sigma, 0) * _gauss1d(v, sigma, order)
    return _normalize(kernel, zero_mean=True)


def _log_kernel(support: int, sigma: float) -> np.ndarray:
    xs, ys = _grid(support)
    r2 = xs**2 + ys**2
    kernel = (r2 - 2.0 * sigma**2) * np.exp(-r2 / (2.0 * sigma**2))
    return _normalize(kernel, zero_mean=True)


def _gaussian_kernel(support: int, sigma: float) -> np.ndarray:
    xs, ys = _grid(support)
    kernel = np.exp(-(xs**2 + ys**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def _check_bank_args(scales, support):
    if support % 2 == 0 or support < 3:
        raise ValueError("support must be odd and >= 3")
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")


def make_lm(
    scales: tuple[float, float, float] = (1.0, 2.0, 4.0),
    orientations: int = 6,
    support: int = 49,
) -> FilterBank:
    """Build the 48-kernel LM bank.

    36 oriented first/second Gaussian derivatives (edges and bars), 8 LoG
    kernels at the base scales extended by one octave and tripled, and 4
    Gaussians.
    """
    _check_bank_args(scales, support)
    if len(scales) != 3:
        raise ValueError("the LM bank uses exactly 3 base scales")
    kernels = []
    meta = []
    for si, sigma in enumerate(scales):
        for oi in range(orientations):
            theta = math.pi * oi / orientations
            kernels.append(_oriented_kernel(support, sigma, theta, order=1))
            meta.append(KernelMeta(FAMILY_EDGE, si, oi))
            kernels.append(_oriented_kernel(support, sigma, theta, order=2))
            meta.append(KernelMeta(FAMILY_BAR, si, oi))
    blob_scales = tuple(scales) + (2.0 * scales[-1],)
    for si, sigma in enumerate(blob_scales):
        kernels.append(_log_kernel(support, sigma))
        meta.append(KernelMeta(FAMILY_LOG, si))
    for si, sigma in enumerate(blob_scales):
        kernels.append(_log_kernel(support, 3.0 * sigma))
        meta.append(KernelMeta(FAMILY_LOG, len(blob_scales) + si))
    for si, sigma in enumerate(blob_scales):
        kernels.append(_gaussian_kernel(support, sigma))
        meta.append(KernelMeta(FAMILY_GAUSSIAN, si))
    return FilterBank(np.stack(kernels), tuple(meta))


def make_mr_bank(
    scales: tuple[float, float, float] = (1.0, 2.0, 4.0),
    orientations: int = 6,
    support: int = 49,
    isotropic_sigma: float = 10.0,
) -> FilterBank:
    """Build the 38-kernel maximum-response bank: edge and bar kernels at
    each scale and orientation plus an isotropic Gaussian and LoG."""
    _check_bank_args(scales, support)
    kernels = []
    meta = []
    for si, sigma in enumerate(scales):
        for oi in range(orientations):
            theta = math.pi * oi / orientations
            kernels.append(_oriented_kernel(support, sigma, theta, order=1))
            meta.append(KernelMeta(FAMILY_EDGE, si, oi))
            kernels.append(_oriented_kernel(support, sigma, theta, order=2))
            meta.append(KernelMeta(FAMILY_BAR, si, oi))
    kernels.append(_gaussian_kernel(support, isotropic_sigma))
    meta.append(KernelMeta(FAMILY_GAUSSIAN, 0))
    kernels.append(_log_kernel(support, isotropic_sigma))
    meta.append(KernelMeta(FAMILY_LOG, 0))
    return FilterBank(np.stack(kernels), tuple(meta))


def apply_bank(img: GrayImage, bank: FilterBank) -> FilterResponseField:
    """Correlate the image with every kernel, valid region only."""
    k = bank.support
    if img.width < k or img.height < k:
        raise ValueError("image smaller than the kernel support")
    out = np.stack(
        [correlate2d(img.pixels, kern, mode="valid") for kern in bank.kernels],
        axis=2,
    )
    return FilterResponseField(out, bank.meta, support=k)


def mr8_collapse(field: FilterResponseField) -> DescriptorField:
    """Collapse an MR response field to 8 channels: the per-pixel maximum
    over the orientations of each oriented family/scale group, then the
    isotropic channels, in bank order."""
    groups: dict[tuple[str, int], list[int]] = {}
    iso: list[int] = []
    for idx, m in enumerate(field.meta):
        if m.family in ORIENTED_FAMILIES:
            groups.setdefault((m.family, m.scale), []).append(idx)
        else:
            iso.append(idx)
    sizes = {len(v) for v in groups.values()}
    if sizes != {6} or len(groups) != 6 or len(iso) != 2:
        raise ValueError("channel metadata inconsistent with the MR bank layout")
    channels = [field.responses[:, :, idxs].max(axis=2) for idxs in groups.values()]
    channels.extend(field.responses[:, :, i] for i in iso)
    data = np.stack(channels, axis=2)
    return DescriptorField(
        data,
        stride=1,
        offset=(field.support - 1) // 2,
        receptive_field=field.support,
    )


def as_descriptor_field(field: FilterResponseField) -> DescriptorField:
    """View a response field as dense descriptors, one per pixel, whose
    dimension is the kernel count."""
    return DescriptorField(
        field.responses,
        stride=1,
        offset=(field.support - 1) // 2,
        receptive_field=field.support,
    )


def bank_extractor(bank: FilterBank):
    """Extractor callable producing raw per-pixel filter responses."""

    def extract(img: GrayImage) -> DescriptorField:
        return as_descriptor_field(apply_bank(img, bank))

    return extract


def mr8_extractor(bank: FilterBank | None = None):
    """Extractor callable producing 8-D MR descriptors from an image."""
    bank = bank if bank is not None else make_mr_bank()

    def extract(img: GrayImage) -> DescriptorField:
        return mr8_collapse(apply_bank(img, bank))

    return extract
