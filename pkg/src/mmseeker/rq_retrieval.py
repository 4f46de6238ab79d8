"""Residual-quantization baseline.

Keys are stored as per-channel residual codes. A query builds one lookup
table of ``<fused target, stage centroid>`` products, so each key costs
``M_total * stages`` lookups and the target itself is never quantized.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .core import FusionWeights, MultiModalRecord, SequenceStore, TopKResult
from .exact import fuse
from .quantizers import DEFAULT_MAX_ITERS, ResidualCodebook, residual_encode, train_residual


class ResidualIndex:
    def __init__(self, codebooks: Sequence[ResidualCodebook], codes: np.ndarray):
        self.codebooks = list(codebooks)
        self.codes = np.ascontiguousarray(codes, dtype=np.uint16)   # (L, M, stages)
        self.centroids = np.stack([cb.centroids for cb in self.codebooks])  # (M, S, C, d)

    @classmethod
    def fit(cls, store: SequenceStore, stages: int = 4, cardinality: int = 256, seed: int = 0,
            max_iters: int = DEFAULT_MAX_ITERS) -> "ResidualIndex":
        cbs = [train_residual(store, m, stages, cardinality, seed, max_iters)
               for m in range(store.num_channels)]
        codes = np.stack([residual_encode(cb, store.channel(m)) for m, cb in enumerate(cbs)], axis=1)
        return cls(cbs, codes)

    @property
    def stages(self) -> int:
        return self.centroids.shape[1]

    def scores(self, target, fw: FusionWeights) -> np.ndarray:
        t = target.as_array() if isinstance(target, MultiModalRecord) else np.asarray(target)
        f = fuse(t, fw)
        lut = np.ascontiguousarray(self.centroids.astype(np.float64) @ f)   # (M, S, C)
        return kernels.lut_scan(lut, self.codes, np.asarray(fw.gamma, dtype=np.float64))


def rq_topk(index: ResidualIndex, store: SequenceStore, target, fw: FusionWeights, K: int) -> TopKResult:
    if not 1 <= K <= store.length:
        raise ValueError(f"K must lie in [1, L={store.length}], got {K}")
    L, M, S = index.codes.shape
    return TopKResult.from_scores(index.scores(target, fw), K, "rq",
                                  counters={"lookups": L * M * S})
