import numpy as np
import pytest

from texbank.corpus import GrayImage
from texbank.descriptors import DescriptorSample


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_sample(rng, n, dim, scale=1.0, with_positions=False, extent=32.0):
    desc = rng.normal(scale=scale, size=(n, dim))
    if with_positions:
        pos = np.column_stack(
            [rng.uniform(0, extent, n), rng.uniform(0, extent, n), np.ones(n)]
        )
    else:
        pos = np.column_stack([np.zeros(n), np.zeros(n), np.ones(n)])
    return DescriptorSample(desc, pos)


def random_image(rng, h, w):
    return GrayImage(rng.uniform(0.0, 1.0, size=(h, w)))


def sinusoid_texture(rng, size, angle, period):
    """Oriented sinusoidal grating with mild noise."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    u = np.cos(angle) * xs + np.sin(angle) * ys
    vals = 0.5 + 0.45 * np.sin(2.0 * np.pi * u / period + rng.uniform(0, 2 * np.pi))
    vals = vals + rng.normal(scale=0.02, size=vals.shape)
    return GrayImage(np.clip(vals, 0.0, 1.0))


def checkerboard_texture(rng, size, cell):
    ys, xs = np.mgrid[0:size, 0:size]
    phase_x, phase_y = rng.integers(0, cell, size=2)
    vals = (((xs + phase_x) // cell + (ys + phase_y) // cell) % 2).astype(float)
    vals = 0.1 + 0.8 * vals + rng.normal(scale=0.02, size=vals.shape)
    return GrayImage(np.clip(vals, 0.0, 1.0))


def noise_texture(rng, size):
    return GrayImage(np.clip(rng.normal(0.5, 0.2, size=(size, size)), 0.0, 1.0))


def synthetic_texture_set(seed, per_class=30, size=64):
    """Three visually distinct texture classes with per-image variation."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(per_class):
        angle = rng.uniform(0, np.pi)
        period = rng.uniform(6.0, 12.0)
        images.append(sinusoid_texture(rng, size, angle, period))
        labels.append("sinusoid")
    for i in range(per_class):
        cell = int(rng.integers(4, 9))
        images.append(checkerboard_texture(rng, size, cell))
        labels.append("checker")
    for i in range(per_class):
        images.append(noise_texture(rng, size))
        labels.append("noise")
    return images, labels
