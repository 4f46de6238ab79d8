"""Exact weighted cross-modal scoring: the ground-truth oracle.

The score between a target pair ``t`` and a history pair ``l`` is the inner
product of the gamma-fused vectors::

    score = (sum_i g_i x_t^(i)) . (sum_j g_j x_l^(j))

Retrieval fuses each record once (``M_total * d`` multiplies) and takes a
single ``d``-dot, instead of the ``M_total^2`` channel-pair expansion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import FusionWeights, MultiModalRecord, SequenceStore, TopKResult


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, MultiModalRecord):
        return x.as_array()
    return np.asarray(x)


def _check_pair(a: np.ndarray, b: np.ndarray, fw: FusionWeights) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: target {a.shape} vs key {b.shape}")
    if a.shape[0] != fw.num_channels:
        raise ValueError(f"records have {a.shape[0]} channels, weights cover {fw.num_channels}")


def fuse(vectors, fw: FusionWeights) -> np.ndarray:
    """Gamma-weighted sum over channels; works on ``(M, d)`` or ``(L, M, d)``."""
    v = _as_matrix(vectors).astype(np.float64)
    return np.tensordot(fw.gamma, v, axes=([0], [v.ndim - 2]))


def exact_pair_score(target, key, fw: FusionWeights) -> float:
    t = _as_matrix(target)
    k = _as_matrix(key)
    _check_pair(t, k, fw)
    return float(fuse(t, fw) @ fuse(k, fw))


@dataclass(frozen=True)
class DecomposedVector:
    """Per-channel norms and unit directions. Zero channels keep a zero direction."""

    norms: np.ndarray
    units: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.norms[:, None] * self.units


def decompose(vectors) -> DecomposedVector:
    v = _as_matrix(vectors).astype(np.float64)
    norms = np.linalg.norm(v, axis=1)
    units = np.zeros_like(v)
    nz = norms > 0
    units[nz] = v[nz] / norms[nz, None]
    return DecomposedVector(norms, units)


def cross_modal_weights(target_dec: DecomposedVector, key_dec: DecomposedVector,
                        fw: FusionWeights) -> np.ndarray:
    """``gamma_ij = g_i g_j |x_t^(i)| |x_l^(j)|`` as an ``(M_total, M_total)`` matrix."""
    wt = fw.gamma * target_dec.norms
    wk = fw.gamma * key_dec.norms
    return np.outer(wt, wk)


def decomposed_score(target_dec: DecomposedVector, key_dec: DecomposedVector,
                     fw: FusionWeights) -> float:
    if target_dec.units.shape != key_dec.units.shape:
        raise ValueError(f"shape mismatch: {target_dec.units.shape} vs {key_dec.units.shape}")
    if target_dec.units.shape[0] != fw.num_channels:
        raise ValueError("channel count does not match fusion weights")
    w = cross_modal_weights(target_dec, key_dec, fw)
    cos = target_dec.units @ key_dec.units.T
    return float((w * cos).sum())


def fused_scores(store: SequenceStore, target, fw: FusionWeights) -> np.ndarray:
    """Exact score of ``target`` against every position, 0-based."""
    t = _as_matrix(target)
    if t.shape != (store.num_channels, store.dim):
        raise ValueError(f"target shape {t.shape} does not match store "
                         f"({store.num_channels}, {store.dim})")
    if fw.num_channels != store.num_channels:
        raise ValueError("fusion weights do not match store channel count")
    return kernels.fused_scores(store.vectors, fw.gamma, fuse(t, fw))


def exact_counters(store: SequenceStore) -> dict[str, int]:
    L, M, d = store.vectors.shape
    return {
        "score_evaluations": L,
        # target fused once, each key fused once, then one d-dot per key
        "multiplications": M * d + L * (M * d + d),
    }


def exact_topk(store: SequenceStore, target, fw: FusionWeights, k: int) -> TopKResult:
    if not 1 <= k <= store.length:
        raise ValueError(f"k must lie in [1, L={store.length}], got {k}")
    scores = fused_scores(store, target, fw)
    return TopKResult.from_scores(scores, k, "exact", counters=exact_counters(store))
