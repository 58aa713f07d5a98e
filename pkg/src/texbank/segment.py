"""Proposal scoring and greedy pasting for semantic segmentation.

Region proposals arrive as binary masks. Each proposal is encoded by
pooling the image's local descriptors inside its mask, labeled with the
highest-scoring class, and scored by that class score divided by the
region area. Pasting paints proposals in ascending score order, so higher
scoring (and, for equal class scores, smaller) regions overwrite lower
scoring ones; among equal scores the later proposal wins.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .encoders import EncodedVector, OrderlessEncoder, region_pool
from .errors import EmptyRegionError, FormatError
from .descriptors import DescriptorSample
from .learn import LinearClassifier
from .metrics import PixelLabelMap


@dataclass(frozen=True)
class RegionProposal:
    mask: np.ndarray
    encoding: EncodedVector | None = None
    label: int | None = None
    score: float | None = None

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2 or not m.any():
            raise ValueError("proposal mask must be 2-D with positive area")
        object.__setattr__(self, "mask", m)

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class SegmentationResult:
    """Final label map plus, per pixel, the index of the proposal that set
    it (-1 where no proposal covered the pixel)."""

    label_map: PixelLabelMap
    provenance: np.ndarray


def score_proposals(
    proposals: list[RegionProposal],
    clf: LinearClassifier,
    sample: DescriptorSample,
    encoder: OrderlessEncoder,
    divide_by_area: bool = True,
) -> list[RegionProposal]:
    """Encode, label, and score each proposal.

    The label is the argmax class of the pooled encoding; the score is the
    winning class score divided by the region area (the division can be
    turned off when scoring the regions of a disjoint partition, where
    overlap resolution is moot). Proposals containing no descriptors are
    dropped with a warning.
    """
    scored = []
    for idx, prop in enumerate(proposals):
        if prop.encoding is None:
            try:
                enc = region_pool(sample, prop.mask, encoder)
            except EmptyRegionError:
                warnings.warn(f"proposal {idx}: no descriptors inside; dropped")
                continue
        else:
            enc = prop.encoding
        values = clf.decision_values(enc.values[None, :])[0]
        label = int(values.argmax())
        score = float(values[label])
        if divide_by_area:
            score /= prop.area
        scored.append(
            replace(
                prop,
                encoding=enc,
                label=label + 1,  # pixel label ids start at 1; 0 is background
                score=score,
            )
        )
    return scored


def greedy_paste(
    proposals: list[RegionProposal], image_size: tuple[int, int]
) -> SegmentationResult:
    """Paint proposals in ascending score order onto an empty label map.

    Pixels never covered keep label 0. Proposals must carry labels and
    scores (see score_proposals).
    """
    if not proposals:
        raise ValueError("no proposals to paste")
    w, h = image_size
    for prop in proposals:
        if prop.label is None or prop.score is None:
            raise ValueError("proposals must be scored before pasting")
        if prop.mask.shape != (h, w):
            raise ValueError("proposal mask does not match the image size")
    labels = np.zeros((h, w), dtype=np.int64)
    provenance = np.full((h, w), -1, dtype=np.int64)
    for idx in sorted(range(len(proposals)), key=lambda i: proposals[i].score):
        prop = proposals[idx]
        labels[prop.mask] = prop.label
        provenance[prop.mask] = idx
    return SegmentationResult(PixelLabelMap(labels), provenance)


def label_partition(proposals: list[RegionProposal]) -> SegmentationResult:
    """Transfer labels of a disjoint partition directly, no ordering needed."""
    if not proposals:
        raise ValueError("no regions to label")
    h, w = proposals[0].mask.shape
    covered = np.zeros((h, w), dtype=bool)
    for prop in proposals:
        if (covered & prop.mask).any():
            raise ValueError("partition regions overlap")
        covered |= prop.mask
    return greedy_paste(proposals, (w, h))


def write_pgm(labels: np.ndarray, path: str | Path, maxval: int = 65535) -> None:
    """Write a 2-D nonnegative integer array as binary PGM (P5).

    16-bit samples are big-endian per the Netpbm convention.
    """
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > maxval:
        raise ValueError(f"values must lie in [0, {maxval}]")
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        if maxval < 256:
            f.write(labels.astype(">u1").tobytes())
        else:
            f.write(labels.astype(">u2").tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) into an integer array."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    dtype = ">u1" if maxval < 256 else ">u2"
    count = w * h
    raw = data[pos:]
    expected = count * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} sample bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=dtype).reshape(h, w).astype(np.int64)


def load_mask_pgm(path: str | Path) -> np.ndarray:
    """Load a proposal mask from PGM; any nonzero sample is inside."""
    return read_pgm(path) > 0


def parse_rle_proposals(text: str, image_size: tuple[int, int]) -> list[RegionProposal]:
    """Parse run-length proposals: `<region-id> <row> <col-start> <col-end>`
    per line, column range inclusive; `#` comments ignored."""
    w, h = image_size
    masks: dict[int, np.ndarray] = {}
    order: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"RLE line {lineno}: expected 4 fields")
        rid, row, c0, c1 = (int(p) for p in parts)
        if not (0 <= row < h and 0 <= c0 <= c1 < w):
            raise FormatError(f"RLE line {lineno}: run outside the image")
        if rid not in masks:
            masks[rid] = np.zeros((h, w), dtype=bool)
            order.append(rid)
        masks[rid][row, c0 : c1 + 1] = True
    if not masks:
        raise FormatError("RLE proposal list is empty")
    return [RegionProposal(masks[rid]) for rid in order]
