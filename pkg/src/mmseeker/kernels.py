"""Hot inner loops, each with a numba path and a pure-numpy path.

The public functions dispatch on :data:`mmseeker._accel.USE_NUMBA`. Both
paths are importable directly (``*_numba`` / ``*_numpy``) for parity tests
and the backend benchmark. All score accumulation is float64.
"""
from __future__ import annotations

import numpy as np

from ._accel import HAS_NUMBA, USE_NUMBA, njit, prange

# Elements per temporary block in the chunked numpy paths.
_BLOCK = 1 << 22


# ---------------------------------------------------------------- exact scan

@njit(parallel=True)
def fused_scores_numba(vectors, gamma, target_fused):
    L, M, d = vectors.shape
    out = np.empty(L, dtype=np.float64)
    for l in prange(L):
        acc = 0.0
        for k in range(d):
            f = 0.0
            for m in range(M):
                f += gamma[m] * vectors[l, m, k]
            acc += f * target_fused[k]
        out[l] = acc
    return out


def fused_scores_numpy(vectors, gamma, target_fused):
    fused = np.tensordot(np.asarray(gamma, dtype=np.float64), vectors.astype(np.float64),
                         axes=([0], [1]))
    return fused @ np.asarray(target_fused, dtype=np.float64)


@njit(parallel=True)
def dot_rows_numba(X, q):
    n, d = X.shape
    out = np.empty(n, dtype=np.float64)
    for r in prange(n):
        s = 0.0
        for k in range(d):
            s += X[r, k] * q[k]
        out[r] = s
    return out


def dot_rows_numpy(X, q):
    return (np.asarray(X, dtype=np.float64) * np.asarray(q, dtype=np.float64)).sum(axis=1)


# ---------------------------------------------------------------- PQ scan
# ``rows[i, j, b, :]`` is the table row selected by the target's code for
# channel i, subvector b; the per-key work is still M^2 * nb lookups.

@njit(parallel=True)
def pq_scan_numba(rows, codes, w_target, w_key):
    L, M, nb = codes.shape
    out = np.empty(L, dtype=np.float64)
    for l in prange(L):
        acc = 0.0
        for j in range(M):
            sj = 0.0
            for i in range(M):
                s = 0.0
                for b in range(nb):
                    s += rows[i, j, b, codes[l, j, b]]
                sj += w_target[i] * s
            acc += w_key[j] * sj
        out[l] = acc
    return out


def pq_scan_numpy(rows, codes, w_target, w_key):
    L, M, nb = codes.shape
    out = np.zeros(L, dtype=np.float64)
    b_idx = np.arange(nb)[None, :]
    for j in range(M):
        cj = codes[:, j, :]
        for i in range(M):
            s = rows[i, j][b_idx, cj].astype(np.float64).sum(axis=1)
            out += w_key[j] * w_target[i] * s
    return out


# ---------------------------------------------------------------- residual LUT scan

@njit(parallel=True)
def lut_scan_numba(lut, codes, weights):
    L, M, S = codes.shape
    out = np.empty(L, dtype=np.float64)
    for l in prange(L):
        acc = 0.0
        for m in range(M):
            s = 0.0
            for st in range(S):
                s += lut[m, st, codes[l, m, st]]
            acc += weights[m] * s
        out[l] = acc
    return out


def lut_scan_numpy(lut, codes, weights):
    L, M, S = codes.shape
    out = np.zeros(L, dtype=np.float64)
    s_idx = np.arange(S)
    for m in range(M):
        out += weights[m] * lut[m][s_idx[None, :], codes[:, m, :]].sum(axis=1)
    return out


# ---------------------------------------------------------------- Hamming

@njit(inline="always")
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(parallel=True)
def hamming_scan_numba(keys, target):
    L, W = keys.shape
    out = np.empty(L, dtype=np.int64)
    for l in prange(L):
        c = 0
        for w in range(W):
            c += _popcount64(keys[l, w] ^ target[w])
        out[l] = c
    return out


def hamming_scan_numpy(keys, target):
    return np.bitwise_count(keys ^ target[None, :]).sum(axis=1, dtype=np.int64)


# ---------------------------------------------------------------- nearest centroid

@njit(parallel=True)
def nearest_centroid_numba(points, centroids):
    """Direct squared-difference argmin; ties go to the lowest centroid index."""
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for p in prange(n):
        best = np.inf
        arg = 0
        for c in range(k):
            s = 0.0
            for t in range(dim):
                diff = np.float64(points[p, t]) - np.float64(centroids[c, t])
                s += diff * diff
            if s < best:
                best = s
                arg = c
        labels[p] = arg
        dists[p] = best
    return labels, dists


def nearest_centroid_numpy(points, centroids):
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    c64 = centroids.astype(np.float64)
    step = max(1, _BLOCK // max(1, k * dim))
    for s in range(0, n, step):
        blk = points[s:s + step].astype(np.float64)
        d2 = ((blk[:, None, :] - c64[None, :, :]) ** 2).sum(axis=2)
        lab = d2.argmin(axis=1)
        labels[s:s + step] = lab
        dists[s:s + step] = d2[np.arange(len(blk)), lab]
    return labels, dists


@njit(parallel=True)
def pq_assign_numba(points, centroids):
    """Codes for every subvector in one pass; ``centroids`` is ``(nb, C, sub)``."""
    n = points.shape[0]
    nb, k, sub = centroids.shape
    codes = np.empty((n, nb), dtype=np.uint16)
    for p in prange(n):
        for b in range(nb):
            best = np.inf
            arg = 0
            off = b * sub
            for c in range(k):
                s = 0.0
                for t in range(sub):
                    diff = np.float64(points[p, off + t]) - np.float64(centroids[b, c, t])
                    s += diff * diff
                if s < best:
                    best = s
                    arg = c
            codes[p, b] = arg
    return codes


def pq_assign_numpy(points, centroids):
    nb, _, sub = centroids.shape
    codes = np.empty((points.shape[0], nb), dtype=np.uint16)
    for b in range(nb):
        blk = np.ascontiguousarray(points[:, b * sub:(b + 1) * sub])
        codes[:, b] = nearest_centroid_numpy(blk, centroids[b])[0]
    return codes


@njit(parallel=True)
def _argmin_rows_numba(cross, cnorm):
    n, k = cross.shape
    labels = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    for p in prange(n):
        best = np.inf
        arg = 0
        for c in range(k):
            v = cnorm[c] - 2.0 * cross[p, c]
            if v < best:
                best = v
                arg = c
        labels[p] = arg
        vals[p] = best
    return labels, vals


def assign_expanded_numba(points, pnorm, centroids):
    """Nearest centroid via ``|c|^2 - 2 x.c`` with the cross term on BLAS."""
    cnorm = np.einsum("ij,ij->i", centroids, centroids)
    labels, vals = _argmin_rows_numba(points @ centroids.T, cnorm)
    return labels, np.maximum(pnorm + vals, 0.0)


def assign_expanded_numpy(points, pnorm, centroids):
    cnorm = np.einsum("ij,ij->i", centroids, centroids)
    k = centroids.shape[0]
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    step = max(1, _BLOCK // max(1, k))
    for s in range(0, n, step):
        v = cnorm[None, :] - 2.0 * (points[s:s + step] @ centroids.T)
        lab = v.argmin(axis=1)
        labels[s:s + step] = lab
        dists[s:s + step] = v[np.arange(len(lab)), lab]
    return labels, np.maximum(pnorm + dists, 0.0)


@njit
def cluster_sums_numba(points, labels, k):
    n, dim = points.shape
    sums = np.zeros((k, dim), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    for p in range(n):
        c = labels[p]
        counts[c] += 1
        for t in range(dim):
            sums[c, t] += points[p, t]
    return sums, counts


def cluster_sums_numpy(points, labels, k):
    sums = np.zeros((k, points.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, points)
    return sums, np.bincount(labels, minlength=k).astype(np.int64)


# ---------------------------------------------------------------- dispatch

IMPLEMENTATIONS = {
    "numpy": {
        "fused_scores": fused_scores_numpy,
        "dot_rows": dot_rows_numpy,
        "pq_scan": pq_scan_numpy,
        "pq_assign": pq_assign_numpy,
        "lut_scan": lut_scan_numpy,
        "hamming_scan": hamming_scan_numpy,
        "nearest_centroid": nearest_centroid_numpy,
        "assign_expanded": assign_expanded_numpy,
        "cluster_sums": cluster_sums_numpy,
    },
}
if HAS_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "fused_scores": fused_scores_numba,
        "dot_rows": dot_rows_numba,
        "pq_scan": pq_scan_numba,
        "pq_assign": pq_assign_numba,
        "lut_scan": lut_scan_numba,
        "hamming_scan": hamming_scan_numba,
        "nearest_centroid": nearest_centroid_numba,
        "assign_expanded": assign_expanded_numba,
        "cluster_sums": cluster_sums_numba,
    }

_ACTIVE = IMPLEMENTATIONS["numba" if USE_NUMBA else "numpy"]

fused_scores = _ACTIVE["fused_scores"]
dot_rows = _ACTIVE["dot_rows"]
pq_scan = _ACTIVE["pq_scan"]
pq_assign = _ACTIVE["pq_assign"]
lut_scan = _ACTIVE["lut_scan"]
hamming_scan = _ACTIVE["hamming_scan"]
nearest_centroid = _ACTIVE["nearest_centroid"]
assign_expanded = _ACTIVE["assign_expanded"]
cluster_sums = _ACTIVE["cluster_sums"]
