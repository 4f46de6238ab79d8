"""Vector compressors: k-means, product quantization, residual quantization, LSH.

PQ codes are stored as ``uint16`` regardless of cardinality; the number of
subvectors is the code length, not a bit width.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import SequenceStore

logger = logging.getLogger(__name__)

MAX_CARDINALITY = 1 << 16

DEFAULT_MAX_ITERS = 25
DEFAULT_TOL = 1e-4


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------- k-means

@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    distortions: list[float] = field(default_factory=list)
    """Mean squared distance after the initial assignment and after every Lloyd step."""

    @property
    def n_iter(self) -> int:
        return len(self.distortions) - 1


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding. Degenerate inputs fall back to the lowest unused index."""
    n = points.shape[0]
    chosen = np.zeros(n, dtype=bool)
    idx = int(rng.integers(n))
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[idx]
    chosen[idx] = True
    d2 = ((points - points[idx]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(np.flatnonzero(~chosen)[0])
        chosen[idx] = True
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return centers


def lloyd_step(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Move centroids to their cluster means; empty clusters jump to the farthest points."""
    k = centroids.shape[0]
    sums, counts = kernels.cluster_sums(points, labels, k)
    new = centroids.copy()
    full = counts > 0
    new[full] = sums[full] / counts[full, None]
    empty = np.flatnonzero(~full)
    if empty.size:
        gap = ((points - new[labels]) ** 2).sum(axis=1)
        order = np.lexsort((np.arange(points.shape[0]), -gap))
        for c, p in zip(empty, order[:empty.size]):
            new[c] = points[p]
        logger.debug("re-seeded %d empty clusters", empty.size)
    return new


def train_kmeans(points, k: int, max_iters: int = DEFAULT_MAX_ITERS, seed: int = 0,
                 tol: float = DEFAULT_TOL, init: np.ndarray | None = None) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds.

    Stops after ``max_iters`` updates or when the relative distortion drop
    falls below ``tol``. Deterministic for a given ``seed``.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"points must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if not np.isfinite(x).all():
        raise ValueError("points contain non-finite values")

    if init is None:
        centroids = kmeans_plus_plus(x, k, np.random.default_rng(seed))
    else:
        centroids = np.array(init, dtype=np.float64)
        if centroids.shape != (k, x.shape[1]):
            raise ValueError(f"init has shape {centroids.shape}, expected {(k, x.shape[1])}")

    pnorm = np.einsum("ij,ij->i", x, x)
    labels, d2 = kernels.assign_expanded(x, pnorm, centroids)
    history = [float(d2.mean())]
    for _ in range(max_iters):
        centroids = lloyd_step(x, labels, centroids)
        labels, d2 = kernels.assign_expanded(x, pnorm, centroids)
        cur = float(d2.mean())
        prev = history[-1]
        history.append(cur)
        if prev <= 0 or (prev - cur) <= tol * prev:
            break
    return KMeansResult(centroids, labels, history)


# ---------------------------------------------------------------- product quantization

@dataclass
class PQCodebook:
    """Per-subvector centroid sets for one channel: ``centroids[b, c, :]``."""

    channel: int
    centroids: np.ndarray

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 3:
            raise ValueError("centroids must be (n_subvectors, cardinality, sub_dim)")
        if self.cardinality < 1 or self.cardinality > MAX_CARDINALITY:
            raise ValueError(f"cardinality {self.cardinality} outside [1, {MAX_CARDINALITY}]")
        if not np.isfinite(self.centroids).all():
            raise ValueError("centroids must be finite")

    @property
    def n_subvectors(self) -> int:
        return self.centroids.shape[0]

    @property
    def cardinality(self) -> int:
        return self.centroids.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def dim(self) -> int:
        return self.n_subvectors * self.sub_dim

    def encode(self, vectors) -> np.ndarray:
        return pq_encode(self, vectors)

    def decode(self, codes) -> np.ndarray:
        return pq_decode(self, codes)


def train_pq(store: SequenceStore, channel: int, n_subvectors: int = 8, cardinality: int = 512,
             seed: int = 0, max_iters: int = DEFAULT_MAX_ITERS) -> PQCodebook:
    """One independent k-means codebook per subvector slice of a channel.

    If the sequence is shorter than ``cardinality`` the codebook is clamped to
    ``L`` centroids with a warning.
    """
    if store.length < 1:
        raise ValueError("cannot train on an empty store")
    if not 0 <= channel < store.num_channels:
        raise ValueError(f"channel {channel} out of range")
    d = store.dim
    if n_subvectors < 1 or d % n_subvectors:
        raise ValueError(f"dimension {d} is not divisible by n_subvectors={n_subvectors}")
    if cardinality < 1 or cardinality > MAX_CARDINALITY:
        raise ValueError(f"cardinality must lie in [1, {MAX_CARDINALITY}], got {cardinality}")
    k = cardinality
    if store.length < k:
        warnings.warn(f"channel {channel}: only {store.length} training points, "
                      f"clamping cardinality {k} -> {store.length}", RuntimeWarning, stacklevel=2)
        k = store.length
    sub = d // n_subvectors
    x = store.channel(channel)
    cents = np.empty((n_subvectors, k, sub), dtype=np.float32)
    for b in range(n_subvectors):
        res = train_kmeans(x[:, b * sub:(b + 1) * sub], k, max_iters=max_iters,
                           seed=_derive_seed(seed, channel, b))
        cents[b] = res.centroids
        logger.debug("pq channel=%d sub=%d iters=%d distortion=%.4g", channel, b, res.n_iter,
                     res.distortions[-1])
    return PQCodebook(channel, cents)


def pq_encode(codebook: PQCodebook, vectors) -> np.ndarray:
    """Nearest centroid per subvector (Euclidean, ties to the lowest index).

    A single ``(d,)`` vector gives ``(n_subvectors,)`` codes; an ``(n, d)``
    batch gives ``(n, n_subvectors)``.
    """
    v = np.asarray(vectors)
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    if v2.ndim != 2 or v2.shape[1] != codebook.dim:
        raise ValueError(f"vector dimension {v.shape[-1]} does not match codebook {codebook.dim}")
    codes = kernels.pq_assign(np.ascontiguousarray(v2), codebook.centroids)
    return codes[0] if single else codes


def pq_decode(codebook: PQCodebook, codes) -> np.ndarray:
    c = np.asarray(codes)
    if c.shape[-1] != codebook.n_subvectors:
        raise ValueError(f"code length {c.shape[-1]} != n_subvectors {codebook.n_subvectors}")
    if c.size and (c.min() < 0 or c.max() >= codebook.cardinality):
        raise ValueError(f"code index outside [0, {codebook.cardinality})")
    b_idx = np.arange(codebook.n_subvectors)
    parts = codebook.centroids[b_idx, c.astype(np.int64)]          # (..., nb, sub)
    return parts.reshape(*c.shape[:-1], codebook.dim)


# ---------------------------------------------------------------- residual quantization

@dataclass
class ResidualCodebook:
    """Stage-wise full-dimension centroid sets: ``centroids[s, c, :]``."""

    channel: int
    centroids: np.ndarray

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 3 or self.centroids.shape[0] < 1:
            raise ValueError("centroids must be (stages >= 1, cardinality, d)")

    @property
    def stages(self) -> int:
        return self.centroids.shape[0]

    @property
    def cardinality(self) -> int:
        return self.centroids.shape[1]

    @property
    def dim(self) -> int:
        return self.centroids.shape[2]


def residual_encode(codebook: ResidualCodebook, vectors, stages: int | None = None) -> np.ndarray:
    """Greedy stage-by-stage encoding of the running residual."""
    v = np.asarray(vectors)
    single = v.ndim == 1
    r = np.atleast_2d(v).astype(np.float64)
    if r.shape[1] != codebook.dim:
        raise ValueError(f"vector dimension {r.shape[1]} does not match codebook {codebook.dim}")
    n_st = codebook.stages if stages is None else stages
    codes = np.empty((r.shape[0], n_st), dtype=np.uint16)
    for s in range(n_st):
        cs = codebook.centroids[s]
        labels, _ = kernels.nearest_centroid(np.ascontiguousarray(r), cs)
        codes[:, s] = labels
        r -= cs[labels]
    return codes[0] if single else codes


def residual_decode(codebook: ResidualCodebook, codes) -> np.ndarray:
    c = np.asarray(codes).astype(np.int64)
    n_st = c.shape[-1]
    if n_st > codebook.stages:
        raise ValueError(f"{n_st} stage codes for a {codebook.stages}-stage codebook")
    if c.size and (c.min() < 0 or c.max() >= codebook.cardinality):
        raise ValueError(f"code index outside [0, {codebook.cardinality})")
    out = np.zeros(c.shape[:-1] + (codebook.dim,), dtype=np.float64)
    for s in range(n_st):
        out += codebook.centroids[s][c[..., s]]
    return out


def train_residual(store: SequenceStore, channel: int, stages: int = 4, cardinality: int = 256,
                   seed: int = 0, max_iters: int = DEFAULT_MAX_ITERS) -> ResidualCodebook:
    """Stage ``s`` is k-means over the residuals left by stages ``< s``."""
    if stages < 1:
        raise ValueError(f"stages must be >= 1, got {stages}")
    if not 0 <= channel < store.num_channels:
        raise ValueError(f"channel {channel} out of range")
    x = store.channel(channel).astype(np.float64)
    k = cardinality
    if x.shape[0] < k:
        warnings.warn(f"channel {channel}: only {x.shape[0]} training points, "
                      f"clamping cardinality {k} -> {x.shape[0]}", RuntimeWarning, stacklevel=2)
        k = x.shape[0]
    resid = x.copy()
    cents = np.empty((stages, k, store.dim), dtype=np.float32)
    for s in range(stages):
        res = train_kmeans(resid, k, max_iters=max_iters, seed=_derive_seed(seed, channel, 1000 + s))
        cents[s] = res.centroids
        labels, _ = kernels.nearest_centroid(np.ascontiguousarray(resid), cents[s])
        resid -= cents[s][labels]
        logger.debug("rq channel=%d stage=%d rms=%.4g", channel, s,
                     float(np.sqrt((resid ** 2).sum(axis=1).mean())))
    return ResidualCodebook(channel, cents)


# ---------------------------------------------------------------- LSH

@dataclass
class LSHHasher:
    """Random-hyperplane sign hashing: bit ``b`` is ``hyperplanes[b] . v >= 0``."""

    hyperplanes: np.ndarray

    def __post_init__(self):
        self.hyperplanes = np.asarray(self.hyperplanes, dtype=np.float64)
        self.hyperplanes.setflags(write=False)

    @classmethod
    def create(cls, dim: int, n_bits: int = 128, seed: int = 0) -> "LSHHasher":
        if n_bits < 1:
            raise ValueError(f"n_bits must be >= 1, got {n_bits}")
        return cls(np.random.default_rng(seed).standard_normal((n_bits, dim)))

    @property
    def n_bits(self) -> int:
        return self.hyperplanes.shape[0]

    @property
    def dim(self) -> int:
        return self.hyperplanes.shape[1]

    def bits(self, vectors) -> np.ndarray:
        v = np.asarray(vectors, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise ValueError(f"vector dimension {v.shape[-1]} does not match hasher {self.dim}")
        return (v @ self.hyperplanes.T) >= 0

    def pack(self, vectors) -> np.ndarray:
        """Sign bits packed little-endian into ``uint64`` words, ``(n, words)``."""
        b = np.atleast_2d(self.bits(vectors))
        words = -(-self.n_bits // 64)
        padded = np.zeros((b.shape[0], words * 64), dtype=bool)
        padded[:, :self.n_bits] = b
        packed = np.packbits(padded, axis=1, bitorder="little")
        return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def lsh_hash(hasher: LSHHasher, vector) -> np.ndarray:
    return hasher.bits(vector)


def lsh_hamming(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"bit vectors differ in shape: {a.shape} vs {b.shape}")
    if a.dtype == np.uint64:
        return int(np.bitwise_count(a ^ b).sum())
    return int(np.count_nonzero(a.astype(bool) != b.astype(bool)))
