"""Multi-modal product quantization with a precomputed cross-channel table.

For every channel pair ``(i, j)`` and subvector ``b`` the table holds all
centroid inner products ``<C_i[b][a], C_j[b][c]>``. A pair score is then a
gamma-weighted sum of ``M_total^2 * n_subvectors`` table lookups::

    score ~= sum_i sum_j g_i g_j sum_b T[i, j, b, code_t[i, b], code_l[j, b]]

The table is unweighted, so one table serves any fusion weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .core import FusionWeights, MultiModalRecord, SequenceStore, TopKResult
from .quantizers import DEFAULT_MAX_ITERS, PQCodebook, pq_decode, pq_encode, train_pq


def _check_codebooks(codebooks: Sequence[PQCodebook]) -> None:
    if not codebooks:
        raise ValueError("need at least one codebook")
    nb = {cb.n_subvectors for cb in codebooks}
    sub = {cb.sub_dim for cb in codebooks}
    if len(nb) != 1 or len(sub) != 1:
        raise ValueError(f"codebooks disagree on layout: n_subvectors={sorted(nb)}, "
                         f"sub_dim={sorted(sub)}")


@dataclass
class CrossModalDistanceTable:
    """Centroid-pair inner products for all channel pairs.

    Full layout is ``entries[i, j, b, a, c]``; each ``(i, j, b)`` block is a
    contiguous ``C_max x C_max`` matrix. Half layout keeps only ``i <= j``
    blocks in ``entries[pair_index[i, j], b, a, c]`` and reads ``i > j`` by
    transposition. Codebooks with fewer than ``C_max`` centroids are zero-padded.
    """

    entries: np.ndarray
    cardinalities: tuple[int, ...]
    n_subvectors: int
    half: bool = False
    pair_index: np.ndarray | None = None

    @property
    def num_channels(self) -> int:
        return len(self.cardinalities)

    @property
    def n_entries(self) -> int:
        """Logical entry count, ``sum_ij n_subvectors * |C_i| * |C_j|``."""
        c = np.asarray(self.cardinalities, dtype=np.int64)
        return int(self.n_subvectors * c.sum() ** 2)

    @property
    def nbytes(self) -> int:
        return int(self.entries.nbytes)

    def block(self, i: int, j: int, b: int) -> np.ndarray:
        if not self.half:
            return self.entries[i, j, b]
        if i <= j:
            return self.entries[self.pair_index[i, j], b]
        return self.entries[self.pair_index[j, i], b].T

    def lookup(self, i: int, j: int, b: int, a: int, c: int) -> float:
        if not self.half:
            return float(self.entries[i, j, b, a, c])
        if i <= j:
            return float(self.entries[self.pair_index[i, j], b, a, c])
        return float(self.entries[self.pair_index[j, i], b, c, a])

    def target_rows(self, target_codes: np.ndarray) -> np.ndarray:
        """Contiguous ``(M, M, nb, C_max)`` rows ``T[i, j, b, target_codes[i, b], :]``."""
        M, nb = self.num_channels, self.n_subvectors
        tc = np.asarray(target_codes, dtype=np.int64)
        ii = np.arange(M)[:, None, None]
        jj = np.arange(M)[None, :, None]
        bb = np.arange(nb)[None, None, :]
        a = tc[:, None, :]
        if not self.half:
            return np.ascontiguousarray(self.entries[ii, jj, bb, a])
        lo = np.minimum(ii, jj)
        hi = np.maximum(ii, jj)
        p = np.broadcast_to(self.pair_index[lo, hi], (M, M, nb))
        rows = np.empty((M, M, nb, self.entries.shape[-1]), dtype=self.entries.dtype)
        upper = np.broadcast_to(ii <= jj, (M, M, nb))
        ab = np.broadcast_to(a, (M, M, nb))
        bbb = np.broadcast_to(bb, (M, M, nb))
        rows[upper] = self.entries[p[upper], bbb[upper], ab[upper], :]
        rows[~upper] = self.entries[p[~upper], bbb[~upper], :, ab[~upper]]
        return rows

    def check_symmetry(self, fraction: float = 0.01, seed: int = 0, atol: float = 1e-6) -> bool:
        """Spot-check ``T[i,j,b,a,c] == T[j,i,b,c,a]`` on a random sample of entries."""
        if self.half:
            return True  # one stored block serves both orientations
        rng = np.random.default_rng(seed)
        M = self.num_channels
        n = max(1, int(self.n_entries * fraction))
        n = min(n, 200_000)
        i = rng.integers(M, size=n)
        j = rng.integers(M, size=n)
        b = rng.integers(self.n_subvectors, size=n)
        card = np.asarray(self.cardinalities)
        a = (rng.random(n) * card[i]).astype(np.int64)
        c = (rng.random(n) * card[j]).astype(np.int64)
        fwd = self.entries[i, j, b, a, c]
        rev = self.entries[j, i, b, c, a]
        return bool(np.all(np.abs(fwd.astype(np.float64) - rev) <= atol))


def half_pair_index(M: int) -> np.ndarray:
    """Symmetric ``(M, M)`` map from a channel pair to its half-layout block."""
    pair_index = np.full((M, M), -1, dtype=np.int64)
    p = 0
    for i in range(M):
        for j in range(i, M):
            pair_index[i, j] = pair_index[j, i] = p
            p += 1
    return pair_index


def build_table(codebooks: Sequence[PQCodebook], half: bool = False) -> CrossModalDistanceTable:
    """Precompute centroid inner products for every channel pair and subvector."""
    _check_codebooks(codebooks)
    M = len(codebooks)
    nb = codebooks[0].n_subvectors
    card = tuple(cb.cardinality for cb in codebooks)
    cmax = max(card)
    if half:
        pair_index = half_pair_index(M)
        entries = np.zeros((M * (M + 1) // 2, nb, cmax, cmax), dtype=np.float32)
    else:
        pair_index = None
        entries = np.zeros((M, M, nb, cmax, cmax), dtype=np.float32)
    for i in range(M):
        ci = codebooks[i].centroids.astype(np.float64)
        for j in range(i, M):
            cj = codebooks[j].centroids.astype(np.float64)
            for b in range(nb):
                blk = (ci[b] @ cj[b].T).astype(np.float32)
                if half:
                    entries[pair_index[i, j], b, :card[i], :card[j]] = blk
                else:
                    entries[i, j, b, :card[i], :card[j]] = blk
                    entries[j, i, b, :card[j], :card[i]] = blk.T
    return CrossModalDistanceTable(entries, card, nb, half, pair_index)


@dataclass
class EncodedSequence:
    """PQ codes for every position and channel, ``codes[l, m, b]``."""

    codes: np.ndarray
    codebooks: list[PQCodebook] = field(repr=False)

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint16)
        if self.codes.ndim != 3 or self.codes.shape[1] != len(self.codebooks):
            raise ValueError("codes must be (L, M_total, n_subvectors) matching the codebooks")
        for m, cb in enumerate(self.codebooks):
            if self.codes[:, m].size and int(self.codes[:, m].max()) >= cb.cardinality:
                raise ValueError(f"channel {m} has codes beyond cardinality {cb.cardinality}")

    @property
    def length(self) -> int:
        return self.codes.shape[0]

    def decode(self) -> np.ndarray:
        return np.stack([pq_decode(cb, self.codes[:, m]) for m, cb in enumerate(self.codebooks)],
                        axis=1)


def encode_record(codebooks: Sequence[PQCodebook], record) -> np.ndarray:
    """``(M_total, n_subvectors)`` codes for one record."""
    v = record.as_array() if isinstance(record, MultiModalRecord) else np.asarray(record)
    if v.shape[0] != len(codebooks):
        raise ValueError(f"record has {v.shape[0]} channels, {len(codebooks)} codebooks given")
    return np.stack([pq_encode(cb, v[m]) for m, cb in enumerate(codebooks)])


def decode_record(codebooks: Sequence[PQCodebook], codes) -> np.ndarray:
    return np.stack([pq_decode(cb, codes[m]) for m, cb in enumerate(codebooks)])


def encode_sequence(store: SequenceStore, codebooks: Sequence[PQCodebook]) -> EncodedSequence:
    if store.num_channels != len(codebooks):
        raise ValueError(f"store has {store.num_channels} channels, {len(codebooks)} codebooks")
    codes = np.stack([pq_encode(cb, store.channel(m)) for m, cb in enumerate(codebooks)], axis=1)
    return EncodedSequence(codes, list(codebooks))


def _check_codes(table: CrossModalDistanceTable, codes: np.ndarray, what: str) -> None:
    if codes.shape != (table.num_channels, table.n_subvectors):
        raise ValueError(f"{what} codes have shape {codes.shape}, expected "
                         f"{(table.num_channels, table.n_subvectors)}")
    if codes.min() < 0 or np.any(codes.max(axis=1) >= np.asarray(table.cardinalities)):
        raise ValueError(f"{what} codes outside codebook cardinality")


def approx_pair_score(table: CrossModalDistanceTable, target_codes, target_gammas,
                      key_codes, key_gammas, counters: dict | None = None) -> float:
    """Lookup-sum approximation of one pair score.

    Performs exactly ``M_total^2 * n_subvectors`` lookups; when ``counters``
    is given its ``"lookups"`` entry is incremented by that amount.
    """
    tc = np.asarray(target_codes, dtype=np.int64)
    kc = np.asarray(key_codes, dtype=np.int64)
    _check_codes(table, tc, "target")
    _check_codes(table, kc, "key")
    wt = np.asarray(target_gammas, dtype=np.float64)
    wk = np.asarray(key_gammas, dtype=np.float64)
    M, nb = table.num_channels, table.n_subvectors
    total = 0.0
    for i in range(M):
        for j in range(M):
            s = 0.0
            for b in range(nb):
                s += table.lookup(i, j, b, tc[i, b], kc[j, b])
            total += wt[i] * wk[j] * s
    if counters is not None:
        counters["lookups"] = counters.get("lookups", 0) + M * M * nb
    return total


def pq_scores(table: CrossModalDistanceTable, encoded: EncodedSequence, target_codes,
              fw: FusionWeights) -> np.ndarray:
    tc = np.asarray(target_codes, dtype=np.int64)
    _check_codes(table, tc, "target")
    if fw.num_channels != table.num_channels:
        raise ValueError("fusion weights do not match table channel count")
    g = np.asarray(fw.gamma, dtype=np.float64)
    return kernels.pq_scan(table.target_rows(tc), encoded.codes, g, g)


def pq_topk(table: CrossModalDistanceTable, encoded: EncodedSequence, target_codes,
            fw: FusionWeights, k: int) -> TopKResult:
    L = encoded.length
    if not 1 <= k <= L:
        raise ValueError(f"k must lie in [1, L={L}], got {k}")
    scores = pq_scores(table, encoded, target_codes, fw)
    lookups = L * table.num_channels ** 2 * table.n_subvectors
    return TopKResult.from_scores(scores, k, "pq", counters={"lookups": lookups})


class MultiModalPQ:
    """Per-channel codebooks, the cross-channel table and the encoded sequence."""

    def __init__(self, codebooks: Sequence[PQCodebook], table: CrossModalDistanceTable,
                 encoded: EncodedSequence):
        self.codebooks = list(codebooks)
        self.table = table
        self.encoded = encoded

    @classmethod
    def fit(cls, store: SequenceStore, n_subvectors: int = 8, cardinality: int = 512,
            seed: int = 0, half: bool = False, max_iters: int = DEFAULT_MAX_ITERS) -> "MultiModalPQ":
        codebooks = [train_pq(store, m, n_subvectors, cardinality, seed=seed, max_iters=max_iters)
                     for m in range(store.num_channels)]
        return cls.from_codebooks(store, codebooks, half=half)

    @classmethod
    def from_codebooks(cls, store: SequenceStore, codebooks: Sequence[PQCodebook],
                       half: bool = False) -> "MultiModalPQ":
        return cls(codebooks, build_table(codebooks, half=half), encode_sequence(store, codebooks))

    def encode(self, record) -> np.ndarray:
        return encode_record(self.codebooks, record)

    def search(self, target, fw: FusionWeights, k: int) -> TopKResult:
        return pq_topk(self.table, self.encoded, self.encode(target), fw, k)
