"""Unsupervised vocabulary learning over descriptor samples.

PCA whitening decorrelates descriptors before generative modeling; k-means
builds quantization codebooks (visual words); EM fits diagonal-covariance
Gaussian mixtures. All training is deterministic given the seed, and both
clustering routines record their objective after every iteration so that
convergence can be audited.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptors import DescriptorSample

VARIANCE_FLOOR_FRACTION = 1e-4
PRIOR_FLOOR = 1e-6
DEFAULT_ITERS = 100
REL_TOL = 1e-6

# Vocabulary sizes at which the respective encoders are usually run:
# histogram encoders saturate around 4096 visual words, while mixture
# models stay much smaller since FV dimensionality scales with 2*K*D.
BOVW_DEFAULT_WORDS = 4096
FV_DEFAULT_COMPONENTS_80D = 256
FV_DEFAULT_COMPONENTS_512D = 64


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, DescriptorSample):
        return samples.descriptors
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be a (n, dim) array or DescriptorSample")
    return x


@dataclass(frozen=True)
class PcaWhitener:
    """Projection y = diag(eigenvalues)^-1/2 basis^T (f - mean)."""

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def target_dim(self) -> int:
        return self.basis.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        centered = x - self.mean
        return (centered @ self.basis) / np.sqrt(self.eigenvalues)

    def transform_sample(self, sample: DescriptorSample) -> DescriptorSample:
        return DescriptorSample(self.transform(sample.descriptors), sample.positions)


@dataclass(frozen=True)
class Codebook:
    """K x D matrix of visual words."""

    centers: np.ndarray
    objective_path: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centers must be a (K, D) matrix with K >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("centers must be finite")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            raise ValueError("codebook contains duplicate centers")
        object.__setattr__(self, "centers", c)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class GmmModel:
    """Diagonal-covariance Gaussian mixture."""

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_path: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        p = np.asarray(self.priors, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        v = np.asarray(self.variances, dtype=np.float64)
        if m.ndim != 2 or p.shape != (m.shape[0],) or v.shape != m.shape:
            raise ValueError("inconsistent GMM component shapes")
        if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
            raise ValueError("priors must be nonnegative and sum to 1")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "priors", p)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def size(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def fit_pca_whitener(samples, target_dim: int) -> PcaWhitener:
    """Fit a whitening projection from the sample covariance eigenvectors.

    Near-zero eigenvalues are floored rather than failing, so degenerate
    directions map to (arbitrarily oriented) finite outputs.
    """
    x = _as_matrix(samples)
    n, d = x.shape
    if target_dim < 1 or target_dim > d:
        raise ValueError("target_dim must be in [1, descriptor dim]")
    if n <= target_dim:
        raise ValueError("need more samples than target dimensions")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:target_dim]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    floor = max(eigvals.max(), 0.0) * 1e-12 + 1e-300
    eigvals = np.maximum(eigvals, floor)
    return PcaWhitener(mean, eigvecs, eigvals)


_CHUNK_ELEMENTS = 1 << 24  # cap on temporary (rows x K x D) allocations


def _row_chunks(n: int, k: int, d: int):
    rows = max(1, _CHUNK_ELEMENTS // max(k * d, 1))
    for start in range(0, n, rows):
        yield start, min(start + rows, n)


def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, K) squared Euclidean distances, computed blockwise. The explicit
    # difference (not the expanded dot-product form) keeps exact ties
    # exact, which matters for deterministic assignment.
    n = x.shape[0]
    k, d = centers.shape
    out = np.empty((n, k))
    for a, b in _row_chunks(n, k, d):
        out[a:b] = ((x[a:b, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return out


def _assign_points(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center index and squared distance per point, blockwise so the
    full (n, K) matrix is never held for large vocabularies."""
    n = x.shape[0]
    k, d = centers.shape
    assign = np.empty(n, dtype=np.int64)
    point_d2 = np.empty(n)
    for a, b in _row_chunks(n, k, d):
        d2 = ((x[a:b, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        idx = d2.argmin(axis=1)
        assign[a:b] = idx
        point_d2[a:b] = d2[np.arange(b - a), idx]
    return assign, point_d2


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = x[idx]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(samples, k: int, iters: int = DEFAULT_ITERS, seed: int = 0) -> Codebook:
    """Lloyd iterations from k-means++ seeding.

    Empty clusters are re-seeded from the point farthest to its assigned
    center. The per-iteration objective (sum of squared distances at the
    assignment step) is recorded on the returned codebook.
    """
    x = _as_matrix(samples)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError("need at least k samples")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)
    objective = []
    for _ in range(max(1, iters)):
        assign, point_d2 = _assign_points(x, centers)
        objective.append(float(point_d2.sum()))
        new_centers = centers.copy()
        empty = []
        for j in range(k):
            members = assign == j
            if members.any():
                new_centers[j] = x[members].mean(axis=0)
            else:
                empty.append(j)
        if empty:
            # Re-seed each empty cluster from a distinct farthest point.
            farthest = np.argsort(point_d2)[::-1]
            for j, idx in zip(empty, farthest):
                new_centers[j] = x[idx]
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers
    return Codebook(centers, tuple(objective))


def _log_gaussians(x: np.ndarray, gmm_means, gmm_vars) -> np.ndarray:
    """(n, K) log densities of diagonal Gaussians, one component at a time
    so no (n, K, D) temporary is ever allocated."""
    const = -0.5 * np.log(2.0 * np.pi * gmm_vars).sum(axis=1)
    out = np.empty((x.shape[0], gmm_means.shape[0]))
    for k in range(gmm_means.shape[0]):
        z = ((x - gmm_means[k]) ** 2 / gmm_vars[k]).sum(axis=1)
        out[:, k] = const[k] - 0.5 * z
    return out


def _log_posteriors(gmm: GmmModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (log responsibilities (n, K), per-point log likelihood (n,))."""
    joint = _log_gaussians(x, gmm.means, gmm.variances) + np.log(gmm.priors)[None, :]
    top = joint.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(joint - top).sum(axis=1))
    return joint - lse[:, None], lse


def gmm_posteriors(gmm: GmmModel, f: np.ndarray) -> np.ndarray:
    """Component posteriors for one descriptor (D,) or a batch (n, D);
    computed in log space, each row sums to 1."""
    f = np.asarray(f, dtype=np.float64)
    single = f.ndim == 1
    x = f[None, :] if single else f
    if x.shape[1] != gmm.dim:
        raise ValueError("descriptor dimension does not match the GMM")
    logr, _ = _log_posteriors(gmm, x)
    r = np.exp(logr)
    r /= r.sum(axis=1, keepdims=True)
    return r[0] if single else r


def fit_gmm(samples, k: int, iters: int = DEFAULT_ITERS, seed: int = 0) -> GmmModel:
    """EM for a diagonal-covariance mixture, initialized from k-means.

    Variances are floored at VARIANCE_FLOOR_FRACTION of the mean data
    variance and priors at PRIOR_FLOOR (renormalized), so collapsing
    components cannot produce singular densities. The log-likelihood after
    every E-step is recorded on the returned model.
    """
    x = _as_matrix(samples)
    n, d = x.shape
    if n < k:
        raise ValueError("need at least k samples")
    var_floor = max(float(x.var(axis=0).mean()) * VARIANCE_FLOOR_FRACTION, 1e-12)

    init = kmeans(x, k, iters=10, seed=seed)
    assign, _ = _assign_points(x, init.centers)
    priors = np.bincount(assign, minlength=k).astype(np.float64)
    priors = np.maximum(priors, 1.0)
    priors /= priors.sum()
    means = init.centers.copy()
    variances = np.empty((k, d))
    for j in range(k):
        members = x[assign == j]
        variances[j] = members.var(axis=0) if members.shape[0] > 1 else x.var(axis=0)
    variances = np.maximum(variances, var_floor)

    gmm = GmmModel(priors, means, variances)
    loglik_path = []
    for _ in range(max(1, iters)):
        logr, lse = _log_posteriors(gmm, x)
        loglik = float(lse.sum())
        loglik_path.append(loglik)
        r = np.exp(logr)
        nk = r.sum(axis=0)
        priors = np.maximum(nk / n, PRIOR_FLOOR)
        priors /= priors.sum()
        safe_nk = np.maximum(nk, 1e-300)
        means = (r.T @ x) / safe_nk[:, None]
        ex2 = (r.T @ (x**2)) / safe_nk[:, None]
        variances = np.maximum(ex2 - means**2, var_floor)
        gmm = GmmModel(priors, means, variances)
        if len(loglik_path) > 1:
            prev = loglik_path[-2]
            if abs(loglik - prev) <= REL_TOL * max(1.0, abs(prev)):
                break
    return GmmModel(gmm.priors, gmm.means, gmm.variances, tuple(loglik_path))
