"""Image loading, grayscale conversion, scale pyramids, and dataset manifests.

Images are held as row-major float intensities in [0, 1]. Color inputs are
reduced to luma with the fixed weights (0.299, 0.587, 0.114). Pyramids are
built by bilinear resampling at a geometric progression of scale factors,
discarding any level whose area would exceed a cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

VALID_SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class GrayImage:
    """A grayscale image with intensities in [0, 1], shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("GrayImage requires a non-empty 2-D intensity array")
        if not np.all(np.isfinite(px)):
            raise ValueError("GrayImage intensities must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("GrayImage intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ScalePyramid:
    """Rescaled copies of one image, ordered by strictly increasing factor."""

    levels: tuple[tuple[float, GrayImage], ...]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("pyramid must contain at least one level")
        factors = [f for f, _ in self.levels]
        if any(b <= a for a, b in zip(factors, factors[1:])):
            raise ValueError("pyramid scale factors must be strictly increasing")


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    labels: tuple[str, ...]
    split: str
    mask_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    vocabulary: tuple[str, ...]

    def split_entries(self, split: str) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split == split)


def load_image(path: str | Path) -> GrayImage:
    """Load an 8-bit PNG/PPM/PGM image and convert it to unit-range luma."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.width == 0 or im.height == 0:
                raise FormatError(f"{path}: zero-area image")
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: unreadable or unsupported raster file: {exc}") from exc
    if arr.ndim == 3:
        r, g, b = LUMA_WEIGHTS
        arr = r * arr[:, :, 0] + g * arr[:, :, 1] + b * arr[:, :, 2]
    return GrayImage(np.clip(arr, 0.0, 1.0))


def save_image(img: GrayImage, path: str | Path) -> None:
    """Write an image as 8-bit grayscale (format chosen by extension)."""
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path))


def _resize_bilinear(px: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    h, w = px.shape
    if (new_w, new_h) == (w, h):
        return px.copy()
    # Align pixel centers: target center (i + 0.5) maps to source (i + 0.5)/f.
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = px[y0][:, x0] * (1 - fx) + px[y0][:, x1] * fx
    bot = px[y1][:, x0] * (1 - fx) + px[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return np.clip(out, 0.0, 1.0)


def resize(img: GrayImage, factor: float) -> GrayImage:
    """Bilinear rescale; dimensions round to nearest, at least 1 pixel."""
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    new_w = max(1, int(round(img.width * factor)))
    new_h = max(1, int(round(img.height * factor)))
    return GrayImage(_resize_bilinear(img.pixels, new_w, new_h))


def scale_factors(s_min: float, s_max: float, step: float) -> list[float]:
    """Factors 2**s for s = s_min, s_min+step, ..., up to s_max."""
    if step <= 0:
        raise ValueError("step must be positive")
    if s_min > s_max:
        raise ValueError("s_min must not exceed s_max")
    count = int(math.floor((s_max - s_min) / step + 1e-9)) + 1
    return [2.0 ** (s_min + i * step) for i in range(count)]


def build_pyramid(
    img: GrayImage,
    s_min: float = -3.0,
    s_max: float = 1.5,
    step: float = 0.5,
    max_area: int = 1024 * 1024,
) -> ScalePyramid:
    """Rescale the image at factors 2**s, keeping levels whose area fits the cap.

    A level is kept when its rounded width times height is <= max_area;
    strictly larger levels are discarded. Raises if every level exceeds
    the cap.
    """
    if max_area <= 0:
        raise ValueError("max_area must be positive")
    levels = []
    for f in scale_factors(s_min, s_max, step):
        new_w = max(1, int(round(img.width * f)))
        new_h = max(1, int(round(img.height * f)))
        if new_w * new_h > max_area:
            continue
        levels.append((f, resize(img, f)))
    if not levels:
        raise ValueError("all pyramid levels exceed the area cap")
    return ScalePyramid(tuple(levels))


def parse_manifest(text: str, base_dir: str | Path | None = None) -> DatasetManifest:
    """Parse manifest text: one `path<TAB>labels<TAB>split[<TAB>mask]` per line.

    Labels may be a comma-separated list. Lines starting with `#` and blank
    lines are ignored. Mask paths, when given, must exist relative to
    base_dir (or be absolute).
    """
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    vocab: set[str] = set()
    base = Path(base_dir) if base_dir is not None else None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise FormatError(f"manifest line {lineno}: expected 3 or 4 tab-separated fields")
        path, label_field, split = parts[0], parts[1], parts[2]
        mask = parts[3] if len(parts) == 4 else None
        if split not in VALID_SPLITS:
            raise FormatError(f"manifest line {lineno}: unknown split id {split!r}")
        if path in seen:
            raise FormatError(f"manifest line {lineno}: duplicate image id {path!r}")
        seen.add(path)
        labels = tuple(l.strip() for l in label_field.split(",") if l.strip())
        if not labels:
            raise FormatError(f"manifest line {lineno}: entry has no labels")
        vocab.update(labels)
        if mask is not None:
            mask_file = Path(mask)
            if not mask_file.is_absolute() and base is not None:
                mask_file = base / mask_file
            if not mask_file.exists():
                raise FormatError(f"manifest line {lineno}: dangling mask path {mask!r}")
        entries.append(ManifestEntry(path, labels, split, mask))
    return DatasetManifest(tuple(entries), tuple(sorted(vocab)))


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent)
