"""Baselines: cascading cross-channel retrieval and LSH Hamming ranking.

The cascade probes every key channel ``j`` with every target channel ``i``
(``M_total^2`` probes of ``K_stage1`` each), unions the hits and reranks
the union with the exact score. It only sees pairs that are strong in at
least one single channel pair, which is where its recall loss comes from.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from . import kernels
from .core import FusionWeights, MultiModalRecord, SequenceStore, TopKResult, select_topk
from .exact import fuse
from .graph import GraphIndex
from .quantizers import LSHHasher

logger = logging.getLogger(__name__)

INDEX_KINDS = ("flat", "graph")


def _target_matrix(store: SequenceStore, target) -> np.ndarray:
    t = target.as_array() if isinstance(target, MultiModalRecord) else np.asarray(target)
    if t.shape != (store.num_channels, store.dim):
        raise ValueError(f"target shape {t.shape} does not match store "
                         f"({store.num_channels}, {store.dim})")
    return t


class ChannelIndex:
    """Inner-product index over one channel of the sequence.

    ``flat`` scans every position exactly; ``graph`` searches a small-world
    graph and is approximate.
    """

    def __init__(self, channel: int, vectors: np.ndarray, kind: str = "flat", **graph_params):
        if kind not in INDEX_KINDS:
            raise ValueError(f"unknown index kind {kind!r}; expected one of {INDEX_KINDS}")
        self.channel = channel
        self.kind = kind
        self.vectors = np.ascontiguousarray(vectors)
        self.graph = GraphIndex(self.vectors, **graph_params) if kind == "graph" else None

    @classmethod
    def build(cls, store: SequenceStore, channel: int, kind: str = "flat", **graph_params):
        return cls(channel, store.channel(channel), kind, **graph_params)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def search(self, query, k: int) -> np.ndarray:
        """0-based ids of the top-``k`` inner products, best first."""
        if self.graph is not None:
            return self.graph.search(query, k)[0]
        sims = kernels.dot_rows(self.vectors, np.asarray(query, dtype=np.float64))
        return select_topk(sims, k)


def build_indexes(store: SequenceStore, kind: str = "flat", **graph_params) -> list[ChannelIndex]:
    return [ChannelIndex.build(store, m, kind, **graph_params) for m in range(store.num_channels)]


def cascade_candidates(indexes: Sequence[ChannelIndex], target_matrix: np.ndarray,
                       k_stage1: int) -> np.ndarray:
    """Sorted 0-based union of every ``(i, j)`` probe's top ``k_stage1``."""
    hits = [idx.search(target_matrix[i], k_stage1)
            for i in range(target_matrix.shape[0]) for idx in indexes]
    return np.unique(np.concatenate(hits))


def cascade_topk(indexes: Sequence[ChannelIndex], store: SequenceStore, target,
                 fw: FusionWeights, K: int, K_stage1: int | None = None) -> TopKResult:
    """Stage 1 over all channel pairs, stage 2 exact rerank of the union.

    If the union holds fewer than ``K`` positions all of them are returned
    and the result is flagged ``short``.
    """
    M = store.num_channels
    if len(indexes) != M:
        raise ValueError(f"need one index per channel ({M}), got {len(indexes)}")
    if not 1 <= K <= store.length:
        raise ValueError(f"K must lie in [1, L={store.length}], got {K}")
    k1 = K if K_stage1 is None else int(K_stage1)
    if k1 < K:
        raise ValueError(f"K_stage1={k1} must be >= K={K}")
    k1 = min(k1, store.length)
    t = _target_matrix(store, target)

    cand = cascade_candidates(indexes, t, k1)
    if cand.size > M * M * k1:  # cannot happen; the bound is part of the contract
        raise AssertionError(f"candidate set {cand.size} exceeds M^2*K_stage1={M * M * k1}")
    scores = kernels.fused_scores(store.vectors[cand], fw.gamma, fuse(t, fw))
    res = TopKResult.from_scores(scores, K, "cascade_" + indexes[0].kind, index=cand,
                                 counters={"probes": M * M, "reranks": int(cand.size)})
    if res.short:
        logger.warning("cascade found only %d candidates for K=%d", cand.size, K)
    return res


# ---------------------------------------------------------------- LSH

class LSHIndex:
    """Sign hashes of the gamma-fused key vectors."""

    def __init__(self, hasher: LSHHasher, fw: FusionWeights, keys: np.ndarray):
        self.hasher = hasher
        self.fw = fw
        self.keys = keys

    @classmethod
    def build(cls, store: SequenceStore, fw: FusionWeights, n_bits: int = 128,
              seed: int = 0) -> "LSHIndex":
        hasher = LSHHasher.create(store.dim, n_bits, seed)
        return cls(hasher, fw, hasher.pack(fuse(store.vectors, fw)))

    def distances(self, target) -> np.ndarray:
        t = target.as_array() if isinstance(target, MultiModalRecord) else np.asarray(target)
        return kernels.hamming_scan(self.keys, self.hasher.pack(fuse(t, self.fw))[0])


def lsh_topk(index: LSHIndex, store: SequenceStore, target, fw: FusionWeights, K: int) -> TopKResult:
    """Rank by ascending Hamming distance; scores are reported as ``-distance``."""
    if fw is not index.fw and not np.allclose(fw.gamma, index.fw.gamma):
        raise ValueError("LSH index was built with different fusion weights")
    if not 1 <= K <= store.length:
        raise ValueError(f"K must lie in [1, L={store.length}], got {K}")
    _target_matrix(store, target)
    ham = index.distances(target)
    return TopKResult.from_scores(-ham.astype(np.float64), K, "lsh",
                                  counters={"hamming": int(store.length)})
