"""Pooling encoders: orderless descriptors-to-vector maps and their variants.

BoVW counts nearest-word assignments; the kernel codebook softens them;
LLC reconstructs each descriptor on its nearest words and max-pools; VLAD
accumulates residuals to the nearest word; the Fisher vector accumulates
posterior-weighted first and second order statistics under a GMM. Spatial
pyramid pooling stacks any of these over a grid of subregions, and region
pooling restricts them to a mask without recomputing descriptors.

Orderless encoders here are bit-identical under permutation of the input,
not merely close: encoders that sum floating-point contributions (KCB,
VLAD, FV) sort descriptors into a canonical order first, so summation
order never depends on input order; counting (BoVW) and max pooling (LLC)
are order-exact as they stand.

Pooled statistics are averaged over the descriptor count (not summed).
After global L2 normalization this is invisible, but it keeps subvectors
comparable when encodings of differently-sized regions are stacked.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ._arrayio import read_exact, read_u32, write_u32
from .descriptors import DescriptorSample
from .errors import EmptyRegionError, EmptySampleError, FormatError
from .vocab import Codebook, GmmModel, _log_posteriors

TXEV_MAGIC = b"TXEV"
TXEV_VERSION = 1

DEFAULT_LLC_NEIGHBORS = 5


@dataclass(frozen=True)
class PostProcessSpec:
    """Which post-processing steps to apply, in the fixed order
    signed square root -> per-subvector L2 -> global L2."""

    signed_sqrt: bool = False
    intra_norm: bool = False
    global_l2: bool = False

    def merge(self, other: "PostProcessSpec") -> "PostProcessSpec":
        return PostProcessSpec(
            self.signed_sqrt or other.signed_sqrt,
            self.intra_norm or other.intra_norm,
            self.global_l2 or other.global_l2,
        )


RAW = PostProcessSpec()
IMPROVED_FV_POST = PostProcessSpec(signed_sqrt=True, global_l2=True)
VLAD_POST = PostProcessSpec(intra_norm=True, global_l2=True)


@dataclass(frozen=True)
class EncodedVector:
    """A pooled representation plus a record of applied post-processing."""

    values: np.ndarray
    kind: str
    post_state: PostProcessSpec = RAW
    num_subvectors: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("encoded values must be a 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("encoded values must be finite")
        if self.num_subvectors is not None and v.size % self.num_subvectors != 0:
            raise ValueError("vector length must divide evenly into subvectors")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


def _l2(values: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(values)
    return values if norm == 0 else values / norm


def postprocess(vec: EncodedVector, spec: PostProcessSpec) -> EncodedVector:
    """Apply signed square rooting, per-subvector L2, and/or global L2.

    Zero (sub)vectors pass through L2 normalization unchanged. Intra
    normalization requires a subvector-structured encoding (VLAD).
    """
    values = vec.values.copy()
    if spec.signed_sqrt:
        values = np.sign(values) * np.sqrt(np.abs(values))
    if spec.intra_norm:
        if vec.num_subvectors is None:
            raise ValueError(f"{vec.kind} encoding has no subvector structure")
        blocks = values.reshape(vec.num_subvectors, -1)
        values = np.vstack([_l2(b) for b in blocks]).ravel()
    if spec.global_l2:
        values = _l2(values)
    return replace(vec, values=values, post_state=vec.post_state.merge(spec))


def _canonical(desc: np.ndarray) -> np.ndarray:
    """Sort descriptors lexicographically so aggregation order is a function
    of the multiset of descriptors, never of their input order."""
    return desc[np.lexsort(desc.T[::-1])]


def _check_sample(sample: DescriptorSample, model_dim: int) -> np.ndarray:
    if len(sample) == 0:
        raise EmptySampleError("cannot encode an empty descriptor sample")
    if sample.dim != model_dim:
        raise ValueError(f"descriptor dim {sample.dim} does not match model dim {model_dim}")
    return sample.descriptors


def _sq_dists(desc: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, K) squared distances via the explicit difference, blockwise so
    large vocabularies never allocate an (n, K, D) temporary. The explicit
    form keeps exact ties exact for deterministic assignment."""
    n = desc.shape[0]
    k, d = centers.shape
    rows = max(1, (1 << 24) // max(k * d, 1))
    out = np.empty((n, k))
    for a in range(0, n, rows):
        b = min(a + rows, n)
        out[a:b] = ((desc[a:b, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return out


def _nearest(desc: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-center assignment; ties resolve to the lowest index. Only
    chunk-sized distance blocks are ever held."""
    n = desc.shape[0]
    k, d = centers.shape
    rows = max(1, (1 << 24) // max(k * d, 1))
    out = np.empty(n, dtype=np.int64)
    for a in range(0, n, rows):
        b = min(a + rows, n)
        d2 = ((desc[a:b, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[a:b] = d2.argmin(axis=1)
    return out


def encode_bovw(
    sample: DescriptorSample, cb: Codebook, post: PostProcessSpec | None = None
) -> EncodedVector:
    """Histogram of nearest visual words, averaged to sum to 1."""
    desc = _check_sample(sample, cb.dim)
    assign = _nearest(desc, cb.centers)
    hist = np.bincount(assign, minlength=cb.size).astype(np.float64) / len(sample)
    vec = EncodedVector(hist, "bovw")
    return postprocess(vec, post) if post else vec


def encode_kcb(
    sample: DescriptorSample,
    cb: Codebook,
    lam: float,
    post: PostProcessSpec | None = None,
) -> EncodedVector:
    """Soft assignment: codes proportional to exp(-lam * ||f - c||^2),
    L1-normalized per descriptor, then averaged."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    desc = _canonical(_check_sample(sample, cb.dim))
    d2 = _sq_dists(desc, cb.centers)
    # Shift per row before exponentiating; the shift cancels in the
    # normalization but avoids underflowing every weight to zero.
    d2 -= d2.min(axis=1, keepdims=True)
    w = np.exp(-lam * d2)
    w /= w.sum(axis=1, keepdims=True)
    vec = EncodedVector(w.mean(axis=0), "kcb")
    return postprocess(vec, post) if post else vec


def _solve_kkt(f: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Equality-constrained least squares: min ||f - c.T a||^2, sum(a) = 1."""
    m = c.shape[0]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = 2.0 * (c @ c.T)
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.concatenate([2.0 * (c @ f), [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:m]


def _simplex_lstsq_active(f: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Active-set fallback for larger neighborhoods: drop the most negative
    coefficient until the equality-constrained solution is feasible."""
    r = centers.shape[0]
    free = list(range(r))
    while free:
        a = _solve_kkt(f, centers[free])
        if np.all(a >= -1e-12):
            out = np.zeros(r)
            out[free] = np.clip(a, 0.0, None)
            s = out.sum()
            return out / s if s > 0 else out
        free.pop(int(np.argmin(a)))
    out = np.zeros(r)
    out[0] = 1.0
    return out


def _simplex_lstsq(f: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Minimize ||f - centers.T @ a||^2 over the probability simplex.

    Exact for small neighborhoods: every support subset is solved with the
    sum-to-one equality constraint and the best feasible solution wins.
    Larger neighborhoods fall back to an active-set iteration.
    """
    r = centers.shape[0]
    if r > 12:
        return _simplex_lstsq_active(f, centers)
    best_obj = np.inf
    best = np.zeros(r)
    for mask in range(1, 1 << r):
        idx = [i for i in range(r) if mask >> i & 1]
        a = _solve_kkt(f, centers[idx])
        if np.any(a < -1e-12):
            continue
        a = np.clip(a, 0.0, None)
        s = a.sum()
        if s <= 0:
            continue
        a = a / s
        resid = f - centers[idx].T @ a
        obj = float(resid @ resid)
        if obj < best_obj - 1e-15:
            best_obj = obj
            best = np.zeros(r)
            best[idx] = a
    return best


def encode_llc(
    sample: DescriptorSample,
    cb: Codebook,
    r: int = DEFAULT_LLC_NEIGHBORS,
    post: PostProcessSpec | None = None,
) -> EncodedVector:
    """Locality-constrained coding: each descriptor is reconstructed on its
    r nearest words with nonnegative weights summing to 1; codes are pooled
    by coordinate-wise max."""
    desc = _check_sample(sample, cb.dim)
    if not 1 <= r <= cb.size:
        raise ValueError("neighborhood size must be in [1, K]")
    d2 = _sq_dists(desc, cb.centers)
    pooled = np.zeros(cb.size)
    for i in range(desc.shape[0]):
        nearest = np.argsort(d2[i], kind="stable")[:r]
        alpha = _simplex_lstsq(desc[i], cb.centers[nearest])
        np.maximum.at(pooled, nearest, alpha)
    vec = EncodedVector(pooled, "llc")
    return postprocess(vec, post) if post else vec


def encode_vlad(
    sample: DescriptorSample, cb: Codebook, post: PostProcessSpec | None = None
) -> EncodedVector:
    """Residuals to the nearest word, accumulated per word and averaged over
    the sample; default post-processing is intra-norm then global L2."""
    desc = _canonical(_check_sample(sample, cb.dim))
    assign = _nearest(desc, cb.centers)
    acc = np.zeros((cb.size, cb.dim))
    for k in range(cb.size):
        members = desc[assign == k]
        if members.shape[0]:
            acc[k] = (members - cb.centers[k]).sum(axis=0)
    acc /= len(sample)
    vec = EncodedVector(acc.ravel(), "vlad", num_subvectors=cb.size)
    return postprocess(vec, post if post is not None else VLAD_POST)


def encode_fv(
    sample: DescriptorSample,
    gmm: GmmModel,
    post: PostProcessSpec | None = None,
    posterior_floor: float = 0.0,
) -> EncodedVector:
    """Fisher vector: posterior-weighted first and second order statistics.

    For component k with prior pi_k, mean mu_k and deviations sigma_k, with
    u_i = (f_i - mu_k) / sigma_k and posteriors g_ik:

        phi1_k = mean_i[g_ik * u_i] / sqrt(pi_k)
        phi2_k = mean_i[g_ik * (u_i^2 - 1)] / sqrt(2 * pi_k)

    The output is [phi1 (K*D) | phi2 (K*D)]. Default post-processing is the
    improved variant: signed square root then global L2. Posteriors below
    posterior_floor may be zeroed for speed; the default keeps them all.
    """
    desc = _canonical(_check_sample(sample, gmm.dim))
    n = desc.shape[0]
    logr, _ = _log_posteriors(gmm, desc)
    g = np.exp(logr)
    g /= g.sum(axis=1, keepdims=True)
    if posterior_floor > 0.0:
        g[g < posterior_floor] = 0.0
    sigma = np.sqrt(gmm.variances)
    phi1 = np.empty((gmm.size, gmm.dim))
    phi2 = np.empty((gmm.size, gmm.dim))
    for k in range(gmm.size):
        u = (desc - gmm.means[k]) / sigma[k]
        gk = g[:, k : k + 1]
        phi1[k] = (gk * u).sum(axis=0) / n / np.sqrt(gmm.priors[k])
        phi2[k] = ((gk * (u**2 - 1.0)).sum(axis=0) / n) / np.sqrt(2.0 * gmm.priors[k])
    values = np.concatenate([phi1.ravel(), phi2.ravel()])
    vec = EncodedVector(values, "fv")
    return postprocess(vec, post if post is not None else IMPROVED_FV_POST)


OrderlessEncoder = Callable[[DescriptorSample], EncodedVector]


def spp_encode(
    sample: DescriptorSample,
    grid: tuple[int, int],
    base: OrderlessEncoder,
    image_size: tuple[int, int] | None = None,
) -> EncodedVector:
    """Stack base encodings over a gx-by-gy grid of spatial cells.

    Cells are ordered row-major (x fastest). Cell bounds come from
    image_size (width, height) when given, otherwise from the bounding box
    of the descriptor positions. Empty cells encode as zero blocks.
    """
    gx, gy = grid
    if gx < 1 or gy < 1:
        raise ValueError("grid cells must be >= 1 in both directions")
    if len(sample) == 0:
        raise EmptySampleError("cannot encode an empty descriptor sample")
    xs = sample.positions[:, 0]
    ys = sample.positions[:, 1]
    if image_size is not None:
        x0, y0 = 0.0, 0.0
        x1, y1 = float(image_size[0]), float(image_size[1])
    else:
        x0, y0, x1, y1 = xs.min(), ys.min(), xs.max(), ys.max()
    ix = np.clip(((xs - x0) / max(x1 - x0, 1e-12) * gx).astype(int), 0, gx - 1)
    iy = np.clip(((ys - y0) / max(y1 - y0, 1e-12) * gy).astype(int), 0, gy - 1)
    cell_of = iy * gx + ix
    encoded: list[np.ndarray | None] = []
    base_kind = None
    for cell in range(gx * gy):
        members = cell_of == cell
        if members.any():
            enc = base(sample.subset(members))
            base_kind = enc.kind
            encoded.append(enc.values)
        else:
            encoded.append(None)
    dims = {e.size for e in encoded if e is not None}
    if len(dims) != 1:
        raise ValueError("base encoder produced inconsistent dimensions")
    dim = dims.pop()
    blocks = [e if e is not None else np.zeros(dim) for e in encoded]
    return EncodedVector(
        np.concatenate(blocks),
        f"spp({base_kind},{gx}x{gy})",
        num_subvectors=gx * gy,
    )


def region_pool(
    sample: DescriptorSample, mask: np.ndarray, base: OrderlessEncoder
) -> EncodedVector:
    """Encode only the descriptors whose centers fall inside the mask."""
    if len(sample) == 0:
        raise EmptySampleError("cannot encode an empty descriptor sample")
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be a 2-D boolean array")
    xs = np.rint(sample.positions[:, 0]).astype(int)
    ys = np.rint(sample.positions[:, 1]).astype(int)
    h, w = mask.shape
    if xs.min() < 0 or ys.min() < 0 or xs.max() >= w or ys.max() >= h:
        raise ValueError("mask does not cover all descriptor positions")
    selected = mask[ys, xs]
    if not selected.any():
        raise EmptyRegionError("no descriptor center falls inside the region")
    return base(sample.subset(selected))


def save_encoded_vector(vec: EncodedVector, path: str | Path) -> None:
    """Write a vector in the TXEV format: magic, version, kind tag, u32 dim,
    float32 little-endian values."""
    with open(path, "wb") as f:
        f.write(TXEV_MAGIC)
        write_u32(f, TXEV_VERSION)
        kind_b = vec.kind.encode("utf-8")
        write_u32(f, len(kind_b))
        f.write(kind_b)
        write_u32(f, vec.dim)
        f.write(vec.values.astype("<f4").tobytes())


def load_encoded_vector(path: str | Path) -> EncodedVector:
    with open(path, "rb") as f:
        if read_exact(f, 4) != TXEV_MAGIC:
            raise FormatError(f"{path}: bad magic, not a TXEV file")
        version = read_u32(f)
        if version != TXEV_VERSION:
            raise FormatError(f"{path}: unsupported TXEV version {version}")
        kind = read_exact(f, read_u32(f)).decode("utf-8")
        dim = read_u32(f)
        raw = read_exact(f, 4 * dim)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return EncodedVector(values, kind)
