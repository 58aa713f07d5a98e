"""Evaluation measures: per-class accuracy, average precision in the
PASCAL 2008 and 11-point variants, per-pixel accuracies (class-normalized,
plain, and multi-label set-membership), and mutual-information ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PredictionSet:
    """Ground-truth labels, predicted labels, and per-class scores."""

    true_labels: np.ndarray
    predicted_labels: np.ndarray
    scores: np.ndarray | None = None
    n_classes: int | None = None

    def __post_init__(self):
        t = np.asarray(self.true_labels, dtype=np.int64)
        p = np.asarray(self.predicted_labels, dtype=np.int64)
        if t.ndim != 1 or p.shape != t.shape:
            raise ValueError("true and predicted labels must be matching 1-D arrays")
        n_classes = self.n_classes
        if self.scores is not None:
            s = np.asarray(self.scores, dtype=np.float64)
            if s.shape[0] != t.size:
                raise ValueError("scores must have one row per item")
            if n_classes is None:
                n_classes = s.shape[1]
            elif s.shape[1] != n_classes:
                raise ValueError("score vector length must equal the class count")
            object.__setattr__(self, "scores", s)
        if n_classes is None:
            n_classes = int(max(t.max(), p.max())) + 1
        object.__setattr__(self, "true_labels", t)
        object.__setattr__(self, "predicted_labels", p)
        object.__setattr__(self, "n_classes", n_classes)

    @classmethod
    def from_scores(cls, true_labels, scores) -> "PredictionSet":
        scores = np.asarray(scores, dtype=np.float64)
        return cls(true_labels, scores.argmax(axis=1), scores)


@dataclass(frozen=True)
class PixelLabelMap:
    """Per-pixel integer labels; 0 marks unlabeled ground truth."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 2:
            raise ValueError("label map must be 2-D")
        if lab.min() < 0:
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "labels", lab)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class MultiLabelPixelMap:
    """Per-pixel label sets as a boolean stack indexed [label, y, x].

    Channel 0 is unused (label ids start at 1); a pixel with no true
    channel is unlabeled.
    """

    masks: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=bool)
        if m.ndim != 3:
            raise ValueError("masks must be (labels, height, width)")
        object.__setattr__(self, "masks", m)

    @classmethod
    def from_sets(cls, label_sets, n_labels: int) -> "MultiLabelPixelMap":
        """Build from a 2-D nested sequence of iterables of label ids."""
        h = len(label_sets)
        w = len(label_sets[0])
        masks = np.zeros((n_labels + 1, h, w), dtype=bool)
        for y in range(h):
            for x in range(w):
                for lab in label_sets[y][x]:
                    if not 1 <= lab <= n_labels:
                        raise ValueError(f"label {lab} outside [1, {n_labels}]")
                    masks[lab, y, x] = True
        return cls(masks)

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    def labeled(self) -> np.ndarray:
        return self.masks.any(axis=0)


def per_class_accuracy(preds: PredictionSet) -> float:
    """Mean over classes of the per-class fraction correct, so class
    imbalance does not skew the figure."""
    recalls = []
    for cls in range(preds.n_classes):
        members = preds.true_labels == cls
        count = int(members.sum())
        if count == 0:
            raise ValueError(f"ground-truth class {cls} has no items")
        correct = int((preds.predicted_labels[members] == cls).sum())
        recalls.append(correct / count)
    return float(np.mean(recalls))


def _precision_envelope(positives_sorted: np.ndarray):
    """Cumulative precision/recall plus the running-max precision envelope
    (max precision at recall >= r), from a rank-ordered positive flags
    array."""
    n_pos = int(positives_sorted.sum())
    tp = np.cumsum(positives_sorted)
    ranks = np.arange(1, positives_sorted.size + 1)
    precision = tp / ranks
    recall = tp / n_pos
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return recall, precision, envelope


def average_precision(scores, positives, variant: str = "pascal08") -> float:
    """Average precision of a ranking.

    pascal08 integrates the precision envelope at every positive;
    eleven_point averages the envelope at recalls 0.0, 0.1, ..., 1.0.
    Ties in score keep input order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValueError("scores and positive flags must be matching 1-D arrays")
    if not positives.any():
        raise ValueError("at least one positive item is required")
    order = np.argsort(-scores, kind="stable")
    recall, _, envelope = _precision_envelope(positives[order])
    if variant == "pascal08":
        pos_ranks = np.flatnonzero(positives[order])
        return float(envelope[pos_ranks].sum() / pos_ranks.size)
    if variant == "eleven_point":
        points = []
        for r in np.linspace(0.0, 1.0, 11):
            reachable = envelope[recall >= r - 1e-12]
            points.append(float(reachable[0]) if reachable.size else 0.0)
        return float(np.mean(points))
    raise ValueError(f"unknown AP variant {variant!r}")


def pixel_accuracy(
    pred: PixelLabelMap, gt: PixelLabelMap, normalize_per_class: bool = True
) -> float:
    """Fraction of correctly labeled pixels, ignoring ground-truth label 0.

    The normalized variant averages the per-class fractions; the plain
    variant divides total correct by total labeled pixels.
    """
    if pred.labels.shape != gt.labels.shape:
        raise ValueError("prediction and ground truth dimensions differ")
    labeled = gt.labels > 0
    if not labeled.any():
        raise ValueError("ground truth has no labeled pixels")
    correct = (pred.labels == gt.labels) & labeled
    if not normalize_per_class:
        return float(correct.sum() / labeled.sum())
    recalls = []
    for cls in np.unique(gt.labels[labeled]):
        members = gt.labels == cls
        recalls.append(float(correct[members].sum() / members.sum()))
    return float(np.mean(recalls))


def osa_pixel_accuracy(pred: PixelLabelMap, gt: MultiLabelPixelMap) -> float:
    """Set-membership pixel accuracy: a prediction counts as correct when it
    belongs to the pixel's ground-truth label set. Not normalized per class."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError("prediction and ground truth dimensions differ")
    labeled = gt.labeled()
    if not labeled.any():
        raise ValueError("ground truth has no labeled pixels")
    n_labels = gt.masks.shape[0]
    clipped = np.clip(pred.labels, 0, n_labels - 1)
    ys, xs = np.nonzero(labeled)
    hits = gt.masks[clipped[ys, xs], ys, xs]
    valid = pred.labels[ys, xs] < n_labels
    return float((hits & valid).sum() / labeled.sum())


def mutual_information_reduction(a, c) -> tuple[float, float]:
    """Relative entropy reductions (I(A,C)/H(C), I(A,C)/H(A)) from the
    empirical joint distribution, natural log, with 0 log 0 = 0."""
    a = np.asarray(a)
    c = np.asarray(c)
    if a.shape != c.shape or a.ndim != 1:
        raise ValueError("variables must be matching 1-D sample arrays")
    _, ai = np.unique(a, return_inverse=True)
    _, ci = np.unique(c, return_inverse=True)
    n_a = ai.max() + 1
    n_c = ci.max() + 1
    if n_a < 2:
        raise ValueError("variable A is constant")
    if n_c < 2:
        raise ValueError("variable C is constant")
    joint = np.zeros((n_a, n_c))
    np.add.at(joint, (ai, ci), 1.0)
    joint /= joint.sum()
    pa = joint.sum(axis=1)
    pc = joint.sum(axis=0)

    def entropy(p):
        nz = p > 0
        return float(-(p[nz] * np.log(p[nz])).sum())

    h_a = entropy(pa)
    h_c = entropy(pc)
    nz = joint > 0
    mi = float((joint[nz] * np.log(joint[nz] / np.outer(pa, pc)[nz])).sum())
    mi = max(mi, 0.0)
    return mi / h_c, mi / h_a
