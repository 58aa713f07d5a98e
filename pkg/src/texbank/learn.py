"""Kernels, one-vs-all SVM training, and score calibration.

Four kernels are supported: linear, Hellinger's, additive chi-squared, and
exponential chi-squared. Both the linear and the precomputed-kernel SVMs
are solved by dual coordinate descent with an augmented (regularized) bias
term, stopping on a relative duality gap. Two calibrations are provided:
an affine per-class rescaling that pins the median positive and negative
training scores to +1 and -1, and Platt's sigmoid fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

KERNEL_KINDS = ("linear", "hellinger", "additive_chi2", "exp_chi2")

DUALITY_GAP_TOL = 1e-4
MAX_COORD_UPDATES = 1_000_000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selection; lam applies to (and is required by) exp_chi2 only."""

    kind: str = "linear"
    lam: float | None = None
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "exp_chi2":
            if self.lam is None or self.lam <= 0:
                raise ValueError("exp_chi2 requires a positive lam")
        elif self.lam is not None:
            raise ValueError(f"lam is only meaningful for exp_chi2, not {self.kind}")


@dataclass(frozen=True)
class LinearClassifier:
    """One-vs-all linear decision functions w_c . x + b_c."""

    classes: tuple[str, ...]
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],) or len(self.classes) != w.shape[0]:
            raise ValueError("inconsistent classifier shapes")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return x @ self.weights.T + self.biases

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.decision_values(x).argmax(axis=1)


@dataclass(frozen=True)
class KernelModel:
    """One-vs-all SVM on a precomputed kernel; keeps the training vectors
    (when available) so new data can be scored with the same KernelSpec."""

    classes: tuple[str, ...]
    dual_coef: np.ndarray  # (C, n) values alpha_i * y_i per class
    biases: np.ndarray
    spec: KernelSpec
    training_vectors: np.ndarray | None = None

    def decision_from_kernel(self, k_test_train: np.ndarray) -> np.ndarray:
        k = np.atleast_2d(np.asarray(k_test_train, dtype=np.float64))
        return k @ self.dual_coef.T + self.biases

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        if self.training_vectors is None:
            raise ValueError("model retained no training vectors; use decision_from_kernel")
        k = compute_kernel(x, self.training_vectors, self.spec)
        return self.decision_from_kernel(k)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.decision_values(x).argmax(axis=1)


@dataclass(frozen=True)
class CalibrationParams:
    """Sigmoid score-to-probability map p(s) = 1 / (1 + exp(a*s + b)).

    For a classifier whose positive scores exceed its negative scores,
    a is negative and the probability increases with the score.
    """

    a: float
    b: float

    def probability(self, scores: np.ndarray) -> np.ndarray:
        z = self.a * np.asarray(scores, dtype=np.float64) + self.b
        out = np.empty_like(z, dtype=np.float64)
        pos = z >= 0
        out[pos] = np.exp(-z[pos]) / (1.0 + np.exp(-z[pos]))
        out[~pos] = 1.0 / (1.0 + np.exp(z[~pos]))
        return out


def _pairwise_rows(n: int, m: int, d: int):
    rows = max(1, (1 << 24) // max(m * d, 1))
    for start in range(0, n, rows):
        yield start, min(start + rows, n)


def chi2_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise sum_i (x_i - y_i)^2 / (x_i + y_i), zero denominators
    contributing zero. Computed blockwise to bound temporaries."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    out = np.empty((x.shape[0], y.shape[0]))
    for a, b in _pairwise_rows(x.shape[0], y.shape[0], x.shape[1]):
        num = (x[a:b, None, :] - y[None, :, :]) ** 2
        den = x[a:b, None, :] + y[None, :, :]
        terms = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        out[a:b] = terms.sum(axis=2)
    return out


def _require_nonnegative(x: np.ndarray, kind: str) -> None:
    if np.min(x) < 0:
        raise ValueError(f"{kind} kernel requires componentwise nonnegative inputs")


def compute_kernel(x: np.ndarray, y: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Gram matrix K[i, j] between the rows of x and y under the spec."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ValueError("kernel inputs must share the feature dimension")
    if spec.kind == "linear":
        k = x @ y.T
    elif spec.kind == "hellinger":
        _require_nonnegative(x, "hellinger")
        _require_nonnegative(y, "hellinger")
        k = np.sqrt(x) @ np.sqrt(y).T
    elif spec.kind == "additive_chi2":
        _require_nonnegative(x, "additive_chi2")
        _require_nonnegative(y, "additive_chi2")
        k = np.empty((x.shape[0], y.shape[0]))
        for a, b in _pairwise_rows(x.shape[0], y.shape[0], x.shape[1]):
            num = 2.0 * x[a:b, None, :] * y[None, :, :]
            den = x[a:b, None, :] + y[None, :, :]
            terms = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
            k[a:b] = terms.sum(axis=2)
    else:  # exp_chi2
        _require_nonnegative(x, "exp_chi2")
        _require_nonnegative(y, "exp_chi2")
        k = np.exp(-spec.lam * chi2_distances(x, y))
    if spec.normalize:
        dx = _self_kernel_diag(x, spec)
        dy = _self_kernel_diag(y, spec)
        k = normalize_kernel(k, dx, dy)
    return k


def _self_kernel_diag(x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    if spec.kind == "linear":
        return (x * x).sum(axis=1)
    if spec.kind in ("hellinger", "additive_chi2"):
        # Both reduce to sum_i x_i on the diagonal.
        return x.sum(axis=1)
    return np.ones(x.shape[0])  # exp_chi2: distance to self is 0


def normalize_kernel(k: np.ndarray, diag_x: np.ndarray, diag_y: np.ndarray) -> np.ndarray:
    """K'[i, j] = K[i, j] / sqrt(diag_x[i] * diag_y[j]).

    When the input is a self-kernel (its diagonal equals both diagonal
    arguments), the output diagonal is set to exactly 1, which is its
    mathematical value.
    """
    k = np.asarray(k, dtype=np.float64)
    dx = np.asarray(diag_x, dtype=np.float64)
    dy = np.asarray(diag_y, dtype=np.float64)
    if np.any(dx <= 0) or np.any(dy <= 0):
        raise ValueError("kernel diagonals must be positive for normalization")
    out = k / np.sqrt(dx)[:, None] / np.sqrt(dy)[None, :]
    if (
        k.shape[0] == k.shape[1]
        and np.array_equal(dx, dy)
        and np.array_equal(np.diagonal(k), dx)
    ):
        np.fill_diagonal(out, 1.0)
    return out


def estimate_chi2_lambda(x: np.ndarray) -> float:
    """Reciprocal of the mean off-diagonal chi-squared distance; the usual
    bandwidth heuristic for the exponential kernel on L1-normalized data."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two vectors")
    _require_nonnegative(x, "chi-squared distance")
    d = chi2_distances(x, x)
    mean = (d.sum() - np.trace(d)) / (n * (n - 1))
    if mean <= 0:
        raise ValueError("zero mean chi-squared distance; vectors are all identical")
    return 1.0 / mean


def _dual_cd_binary(
    q_matrix_dot,
    q_diag: np.ndarray,
    y: np.ndarray,
    c: float,
    rng: np.random.Generator,
    gap_tol: float,
    max_updates: int,
):
    """Coordinate descent on the SVM dual with box constraints [0, C].

    q_matrix_dot(i) must return row i of the (bias-augmented) kernel Q.
    Returns (alpha, f) with f_j = sum_i alpha_i y_i Q_ji.
    """
    n = y.size
    alpha = np.zeros(n)
    f = np.zeros(n)  # f_j = sum_i alpha_i y_i Q_ji
    updates = 0
    while updates < max_updates:
        for i in rng.permutation(n):
            grad = y[i] * f[i] - 1.0
            old = alpha[i]
            new = min(max(old - grad / q_diag[i], 0.0), c)
            if new != old:
                f += (new - old) * y[i] * q_matrix_dot(i)
                alpha[i] = new
            updates += 1
            if updates >= max_updates:
                break
        # Duality gap: primal = 0.5 w'w + C sum hinge, dual = sum a - 0.5 w'w.
        reg = 0.5 * float(alpha * y @ f)
        hinge = np.maximum(0.0, 1.0 - y * f).sum()
        primal = reg + c * hinge
        dual = alpha.sum() - reg
        if primal - dual <= gap_tol * max(primal, 1e-12):
            break
    return alpha, f


def _ova_targets(labels: np.ndarray, classes: tuple[str, ...]) -> np.ndarray:
    out = np.empty((len(classes), labels.size))
    for ci, cls in enumerate(classes):
        out[ci] = np.where(labels == cls, 1.0, -1.0)
    return out


def _unique_classes(labels) -> tuple[np.ndarray, tuple[str, ...]]:
    labels = np.asarray(labels)
    classes = tuple(str(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    return labels.astype(str), classes


def train_linear_svm_ova(
    x: np.ndarray, labels, c: float = 1.0, seed: int = 0
) -> LinearClassifier:
    """One-vs-all L1-hinge linear SVMs by dual coordinate descent.

    The bias is handled by augmenting features with a constant 1, so it is
    lightly regularized like the weights. Training stops when the relative
    duality gap falls below 1e-4.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels, classes = _unique_classes(labels)
    if labels.size != x.shape[0]:
        raise ValueError("labels length must match the number of rows")
    xa = np.hstack([x, np.ones((x.shape[0], 1))])
    q_diag = (xa * xa).sum(axis=1)
    n = xa.shape[0]
    weights = np.empty((len(classes), x.shape[1]))
    biases = np.empty(len(classes))
    targets = _ova_targets(labels, classes)
    for ci in range(len(classes)):
        y = targets[ci]
        rng = np.random.default_rng(seed + ci)
        alpha = np.zeros(n)
        w = np.zeros(xa.shape[1])
        updates = 0
        while updates < MAX_COORD_UPDATES:
            for i in rng.permutation(n):
                grad = y[i] * (w @ xa[i]) - 1.0
                old = alpha[i]
                new = min(max(old - grad / q_diag[i], 0.0), c)
                if new != old:
                    w += (new - old) * y[i] * xa[i]
                    alpha[i] = new
                updates += 1
                if updates >= MAX_COORD_UPDATES:
                    break
            margins = y * (xa @ w)
            reg = 0.5 * float(w @ w)
            primal = reg + c * np.maximum(0.0, 1.0 - margins).sum()
            dual = alpha.sum() - reg
            if primal - dual <= DUALITY_GAP_TOL * max(primal, 1e-12):
                break
        weights[ci] = w[:-1]
        biases[ci] = w[-1]
    return LinearClassifier(classes, weights, biases)


def train_kernel_svm_ova(
    k: np.ndarray,
    labels,
    c: float = 1.0,
    seed: int = 0,
    training_vectors: np.ndarray | None = None,
    spec: KernelSpec | None = None,
) -> KernelModel:
    """One-vs-all SVMs on a precomputed kernel matrix.

    The kernel must be symmetric positive semidefinite within tolerance.
    Pass training_vectors and the spec used to build k if the model should
    score raw vectors later.
    """
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("kernel matrix must be square")
    labels, classes = _unique_classes(labels)
    n = k.shape[0]
    if labels.size != n:
        raise ValueError("labels length must match the kernel size")
    if not np.allclose(k, k.T, atol=1e-8):
        raise ValueError("kernel matrix must be symmetric")
    min_eig = float(np.linalg.eigvalsh(k).min())
    if min_eig < -1e-6 * max(np.trace(k) / n, 1e-12):
        raise ValueError(f"kernel is not positive semidefinite (min eigenvalue {min_eig:.3g})")
    offdiag = k - np.diag(np.diagonal(k))
    if np.abs(offdiag).max() <= 1e-12 * max(np.abs(np.diagonal(k)).mean(), 1e-12):
        warnings.warn("kernel matrix is (near-)diagonal; the SVM solution is degenerate")
    ka = k + 1.0  # bias augmentation
    q_diag = np.diagonal(ka).copy()
    dual = np.empty((len(classes), n))
    biases = np.empty(len(classes))
    targets = _ova_targets(labels, classes)
    for ci in range(len(classes)):
        y = targets[ci]
        rng = np.random.default_rng(seed + ci)
        alpha, _ = _dual_cd_binary(
            lambda i: ka[i], q_diag, y, c, rng, DUALITY_GAP_TOL, MAX_COORD_UPDATES
        )
        dual[ci] = alpha * y
        biases[ci] = (alpha * y).sum()
    vecs = None if training_vectors is None else np.asarray(training_vectors, dtype=np.float64)
    return KernelModel(classes, dual, biases, spec or KernelSpec("linear"), vecs)


def recalibrate(clf: LinearClassifier, x: np.ndarray, labels) -> LinearClassifier:
    """Affine-rescale each class so its median positive and negative
    training scores land exactly on +1 and -1.

    Classes whose median positive score does not exceed the median negative
    score are left unchanged with a warning.
    """
    labels = np.asarray(labels).astype(str)
    scores = clf.decision_values(x)
    weights = clf.weights.copy()
    biases = clf.biases.copy()
    for ci, cls in enumerate(clf.classes):
        pos = scores[labels == cls, ci]
        neg = scores[labels != cls, ci]
        if pos.size == 0 or neg.size == 0:
            raise ValueError(f"class {cls!r} needs both positive and negative examples")
        med_pos = float(np.median(pos))
        med_neg = float(np.median(neg))
        if med_pos <= med_neg:
            warnings.warn(f"class {cls!r}: median positive <= median negative; left unchanged")
            continue
        scale = 2.0 / (med_pos - med_neg)
        weights[ci] *= scale
        biases[ci] = scale * (biases[ci] - med_neg) - 1.0
    return LinearClassifier(clf.classes, weights, biases)


def platt_calibrate(scores: np.ndarray, labels: np.ndarray) -> CalibrationParams:
    """Fit p(s) = 1 / (1 + exp(a*s + b)) by regularized maximum likelihood.

    Targets are smoothed to (N+ + 1)/(N+ + 2) and 1/(N- + 2); the fit is a
    Newton iteration with backtracking on the calibration log-loss.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError("scores and labels must be matching 1-D arrays")
    pos = y.astype(bool)
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both positive and negative labels")
    if np.ptp(s) == 0:
        raise ValueError("degenerate calibration problem: all scores are equal")

    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a, b):
        z = a * s + b
        # log(1 + exp(-|z|)) + max(z, 0) is the stable log(1 + exp(z)).
        softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
        return float((t * z + softplus - z).sum())

    a, b = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))
    min_step = 1e-10
    for _ in range(200):
        z = a * s + b
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        d = t - p
        g_a = float((d * s).sum())
        g_b = float(d.sum())
        if max(abs(g_a), abs(g_b)) < 1e-10:
            break
        w = p * (1 - p) + 1e-12
        h_aa = float((w * s * s).sum())
        h_ab = float((w * s).sum())
        h_bb = float(w.sum())
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0:
            break
        da = -(h_bb * g_a - h_ab * g_b) / det
        db = -(-h_ab * g_a + h_aa * g_b) / det
        base = objective(a, b)
        step = 1.0
        while step >= min_step:
            if objective(a + step * da, b + step * db) < base + 1e-12:
                a += step * da
                b += step * db
                break
            step /= 2.0
        else:
            break
    return CalibrationParams(a, b)
