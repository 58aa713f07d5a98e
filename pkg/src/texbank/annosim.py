"""Sequential joint-annotation simulation and cost accounting.

Each image is collected under one known key attribute; the question is
which of the remaining attributes to pay annotators to check. Seed images
annotated exhaustively per key attribute give co-occurrence probabilities
p(q'|q); queries are then ranked either by that prior alone or by the
prior combined with a calibrated classifier score, and a fixed per-image
budget of top-ranked queries is spent. Recall is measured against the
full ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAPLACE_ALPHA = 1.0


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    out[~pos] = np.exp(z[~pos]) / (1.0 + np.exp(z[~pos]))
    return out


@dataclass(frozen=True)
class GroundTruthMatrix:
    """Binary image-by-attribute matrix with one key attribute per image."""

    matrix: np.ndarray
    key: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        k = np.asarray(self.key, dtype=np.int64)
        if m.ndim != 2 or k.shape != (m.shape[0],):
            raise ValueError("matrix must be (images, attributes) with one key per row")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("ground truth entries must be 0 or 1")
        if k.min() < 0 or k.max() >= m.shape[1]:
            raise ValueError("key attribute index out of range")
        if not m[np.arange(m.shape[0]), k].all():
            raise ValueError("the key attribute must be present in its own row")
        object.__setattr__(self, "matrix", m.astype(np.int64))
        object.__setattr__(self, "key", k)

    @property
    def n_images(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class CooccurrenceModel:
    """Smoothed conditional probabilities p(q'|q) with unit diagonal."""

    p_cond: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_cond, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("p_cond must be a square matrix")
        if p.min() < 0 or p.max() > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.allclose(np.diagonal(p), 1.0):
            raise ValueError("p(q|q) must be 1")
        object.__setattr__(self, "p_cond", p)

    @property
    def n_attributes(self) -> int:
        return self.p_cond.shape[0]

    @property
    def base_rate(self) -> float:
        return 1.0 / self.n_attributes

def estimate_cooccurrence(seed: GroundTruthMatrix) -> CooccurrenceModel:
    """Estimate p(q'|q) from exhaustively annotated seed images.

    p(q'|q) is the Laplace-smoothed fraction of key-q seed images that also
    exhibit q', so off-diagonal estimates stay strictly inside (0, 1) and
    the posterior odds never blow up. The diagonal is pinned to 1.
    """
    q = seed.n_attributes
    p = np.empty((q, q))
    for attr in range(q):
        rows = seed.matrix[seed.key == attr]
        if rows.shape[0] == 0:
            raise ValueError(f"no exhaustively annotated seed images for attribute {attr}")
        counts = rows.sum(axis=0)
        p[attr] = (counts + LAPLACE_ALPHA) / (rows.shape[0] + 2.0 * LAPLACE_ALPHA)
    np.fill_diagonal(p, 1.0)
    return CooccurrenceModel(p)


def rank_queries_prior(q: int, model: CooccurrenceModel) -> np.ndarray:
    """Attributes ordered by p(q'|q) descending, q excluded; ties keep
    index order."""
    if not 0 <= q < model.n_attributes:
        raise ValueError("invalid key attribute")
    order = np.argsort(-model.p_cond[q], kind="stable")
    return order[order != q]


def rank_queries_posterior(
    q: int, scores: np.ndarray, model: CooccurrenceModel
) -> np.ndarray:
    """Attributes ordered by the classifier-adjusted probability
    sigmoid(c) * p/(1-p) * (1-p0)/p0, q excluded; ties keep index order."""
    if not 0 <= q < model.n_attributes:
        raise ValueError("invalid key attribute")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (model.n_attributes,):
        raise ValueError("need one classifier score per attribute")
    if not np.all(np.isfinite(scores)):
        raise ValueError("classifier scores must be finite")
    p = np.clip(model.p_cond[q], 1e-12, 1.0 - 1e-12)
    p0 = model.base_rate
    adjusted = sigmoid(scores) * (p / (1.0 - p)) * ((1.0 - p0) / p0)
    order = np.argsort(-adjusted, kind="stable")
    return order[order != q]


@dataclass(frozen=True)
class BudgetReport:
    budget: int
    recall: float
    fully_recovered_fraction: float


def simulate_budget(
    gt: GroundTruthMatrix,
    model: CooccurrenceModel,
    budget: int,
    strategy: str = "prior",
    scores: np.ndarray | None = None,
) -> BudgetReport:
    """Query the top-budget ranked attributes for every image and report the
    recall of true attribute occurrences.

    The key attribute is known for free: it counts as recovered and is
    never queried. Recall is the overall ratio of recovered positives to
    true positives; the report also carries the fraction of images whose
    positives were fully recovered.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if strategy not in ("prior", "posterior"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "posterior":
        if scores is None:
            raise ValueError("posterior strategy requires classifier scores")
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (gt.n_images, gt.n_attributes):
            raise ValueError("scores must be (images, attributes)")
    recovered_total = 0
    true_total = 0
    fully = 0
    for i in range(gt.n_images):
        q = int(gt.key[i])
        if strategy == "prior":
            ranking = rank_queries_prior(q, model)
        else:
            ranking = rank_queries_posterior(q, scores[i], model)
        queried = ranking[:budget]
        positives = np.flatnonzero(gt.matrix[i])
        recovered = 1 + int(gt.matrix[i, queried].sum())  # key known by construction
        recovered_total += recovered
        true_total += positives.size
        if recovered == positives.size:
            fully += 1
    return BudgetReport(budget, recovered_total / true_total, fully / gt.n_images)


def annotation_cost(n_images: int, n_attrs: int, votes: int, rate: float) -> float:
    """Total cost of collecting `votes` binary annotations for `n_attrs`
    attributes on every image at a per-annotation rate."""
    if min(n_images, n_attrs, votes) < 0 or rate < 0:
        raise ValueError("cost factors must be nonnegative")
    return n_images * n_attrs * votes * rate
