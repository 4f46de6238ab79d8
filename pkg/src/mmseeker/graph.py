"""Layered navigable small-world graph for maximum inner product search.

Construction follows the usual hierarchical scheme: geometric level draws,
greedy descent through upper layers, beam search (``ef_construction``) on
the insertion layers, pick ``max_neighbors`` links with the usual diversity
heuristic (back-filled with the best pruned candidates) and shrink
over-full neighbor lists by evicting their weakest link.

Links are chosen on vectors augmented with one extra coordinate
``sqrt(R^2 - |x|^2)`` (``R`` the largest norm), and queries get a zero
there. Query inner products are unchanged, while point-to-point inner
products become ``R^2 - |a - b|^2 / 2``, so links follow Euclidean
proximity instead of piling onto a few large-norm hubs.

Inner-product graphs can strand nodes whose every incoming edge was
evicted. A repair pass re-attaches each unreachable layer-0 node to its
most similar reachable neighbor, so a search with ``ef >= L`` is exhaustive.

Heaps order entries by ``(value, tie)``; candidates use ``(-sim, id)`` and
the result set ``(sim, -id)``, which makes both backends break ties towards
the lower id.
"""
from __future__ import annotations

import heapq
import logging

import numpy as np

from . import kernels
from ._accel import USE_NUMBA, njit
from .core import select_topk

logger = logging.getLogger(__name__)

MAX_LEVEL = 16


# ---------------------------------------------------------------- numba path

@njit
def _less(v1, t1, v2, t2):
    return v1 < v2 or (v1 == v2 and t1 < t2)


@njit
def _push(vals, ties, size, v, t):
    pos = size
    vals[pos] = v
    ties[pos] = t
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(vals[pos], ties[pos], vals[parent], ties[parent]):
            vals[pos], vals[parent] = vals[parent], vals[pos]
            ties[pos], ties[parent] = ties[parent], ties[pos]
            pos = parent
        else:
            break
    return size + 1


@njit
def _pop(vals, ties, size):
    v = vals[0]
    t = ties[0]
    size -= 1
    if size > 0:
        vals[0] = vals[size]
        ties[0] = ties[size]
        pos = 0
        while True:
            left = 2 * pos + 1
            if left >= size:
                break
            best = left
            right = left + 1
            if right < size and _less(vals[right], ties[right], vals[left], ties[left]):
                best = right
            if _less(vals[best], ties[best], vals[pos], ties[pos]):
                vals[pos], vals[best] = vals[best], vals[pos]
                ties[pos], ties[best] = ties[best], ties[pos]
                pos = best
            else:
                break
    return v, t, size


@njit
def _dot(X, e, q):
    s = 0.0
    for k in range(X.shape[1]):
        s += X[e, k] * q[k]
    return s


@njit
def _search_layer(X, q, eps, ef, nbrs, cnts, visited, stamp, cv, ct, rv, rt):
    csize = 0
    rsize = 0
    for e in eps:
        if visited[e] == stamp:
            continue
        visited[e] = stamp
        s = _dot(X, e, q)
        csize = _push(cv, ct, csize, -s, e)
        rsize = _push(rv, rt, rsize, s, -e)
        if rsize > ef:
            _, _, rsize = _pop(rv, rt, rsize)
    while csize > 0:
        negs, c, csize = _pop(cv, ct, csize)
        if rsize >= ef and -negs < rv[0]:
            break
        for t in range(cnts[c]):
            e = nbrs[c, t]
            if visited[e] == stamp:
                continue
            visited[e] = stamp
            s = _dot(X, e, q)
            if rsize < ef or s > rv[0]:
                csize = _push(cv, ct, csize, -s, e)
                rsize = _push(rv, rt, rsize, s, -e)
                if rsize > ef:
                    _, _, rsize = _pop(rv, rt, rsize)
    ids = np.empty(rsize, dtype=np.int64)
    sims = np.empty(rsize, dtype=np.float64)
    for k in range(rsize - 1, -1, -1):
        v, t, rsize = _pop(rv, rt, rsize)
        ids[k] = -t
        sims[k] = v
    return ids, sims


@njit
def _link(X, nbrs, cnts, e, q, cap):
    """Add edge e->q; if e is full, q replaces e's weakest link when stronger."""
    if cnts[e] < cap:
        nbrs[e, cnts[e]] = q
        cnts[e] += 1
        return
    worst = _dot(X, q, X[e])
    slot = -1
    for t in range(cnts[e]):
        s = _dot(X, nbrs[e, t], X[e])
        if s < worst:
            worst = s
            slot = t
    if slot >= 0:
        nbrs[e, slot] = q


@njit
def _select_numba(X, q, ids, m, out):
    """Diversity heuristic: keep a candidate only if it is closer to ``q`` than
    to every neighbor kept so far; back-fill with the pruned ones in order."""
    k = 0
    pruned = np.empty(ids.shape[0], dtype=np.int64)
    npruned = 0
    for t in range(ids.shape[0]):
        if k >= m:
            break
        c = ids[t]
        sq = _dot(X, c, q)
        good = True
        for r in range(k):
            if _dot(X, c, X[out[r]]) >= sq:
                good = False
                break
        if good:
            out[k] = c
            k += 1
        else:
            pruned[npruned] = c
            npruned += 1
    t = 0
    while k < m and t < npruned:
        out[k] = pruned[t]
        k += 1
        t += 1
    return k


@njit
def _build_numba(X, levels, max_neighbors, ef_construction, width):
    n = X.shape[0]
    top = levels[0]
    n_levels = levels.max() + 1
    nbrs = np.full((n_levels, n, width), -1, dtype=np.int64)
    cnts = np.zeros((n_levels, n), dtype=np.int64)
    visited = np.zeros(n, dtype=np.int64)
    cv = np.empty(n + 1, dtype=np.float64)
    ct = np.empty(n + 1, dtype=np.int64)
    rv = np.empty(n + 2, dtype=np.float64)
    rt = np.empty(n + 2, dtype=np.int64)
    entry = 0
    stamp = 0
    sel = np.empty(max_neighbors, dtype=np.int64)
    for q in range(1, n):
        xq = X[q]
        lq = levels[q]
        ep = np.array([entry], dtype=np.int64)
        for lc in range(top, lq, -1):
            stamp += 1
            ids, _ = _search_layer(X, xq, ep, 1, nbrs[lc], cnts[lc], visited, stamp, cv, ct, rv, rt)
            ep = ids[:1]
        for lc in range(min(top, lq), -1, -1):
            stamp += 1
            ids, _ = _search_layer(X, xq, ep, ef_construction, nbrs[lc], cnts[lc], visited, stamp,
                                   cv, ct, rv, rt)
            cap = 2 * max_neighbors if lc == 0 else max_neighbors
            m = _select_numba(X, xq, ids, min(max_neighbors, ids.shape[0]), sel)
            for t in range(m):
                nbrs[lc, q, t] = sel[t]
            cnts[lc, q] = m
            for t in range(m):
                _link(X, nbrs[lc], cnts[lc], sel[t], q, cap)
            ep = ids
        if lq > top:
            top = lq
            entry = q
    return nbrs, cnts, entry, top


@njit
def _flood(nbrs, cnts, start, reach, stack):
    size = 0
    if reach[start]:
        return
    reach[start] = True
    stack[0] = start
    size = 1
    while size > 0:
        size -= 1
        u = stack[size]
        for t in range(cnts[u]):
            w = nbrs[u, t]
            if not reach[w]:
                reach[w] = True
                stack[size] = w
                size += 1


@njit
def _repair_numba(X, nbrs, cnts, entry, width):
    n = X.shape[0]
    reach = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    _flood(nbrs, cnts, entry, reach, stack)
    added = 0
    for v in range(n):
        if reach[v]:
            continue
        u = -1
        best = -np.inf
        for t in range(cnts[v]):
            w = nbrs[v, t]
            if reach[w] and cnts[w] < width:
                s = _dot(X, w, X[v])
                if s > best:
                    best = s
                    u = w
        if u < 0:
            for w in range(n):
                if reach[w] and cnts[w] < width:
                    s = _dot(X, w, X[v])
                    if s > best:
                        best = s
                        u = w
        if u < 0:
            return -1
        nbrs[u, cnts[u]] = v
        cnts[u] += 1
        added += 1
        _flood(nbrs, cnts, v, reach, stack)
    return added


@njit
def _query_numba(X, q, nbrs, cnts, entry, top, ef):
    n = X.shape[0]
    visited = np.zeros(n, dtype=np.int64)
    cv = np.empty(n + 1, dtype=np.float64)
    ct = np.empty(n + 1, dtype=np.int64)
    rv = np.empty(n + 2, dtype=np.float64)
    rt = np.empty(n + 2, dtype=np.int64)
    stamp = 0
    ep = np.array([entry], dtype=np.int64)
    for lc in range(top, 0, -1):
        stamp += 1
        ids, _ = _search_layer(X, q, ep, 1, nbrs[lc], cnts[lc], visited, stamp, cv, ct, rv, rt)
        ep = ids[:1]
    stamp += 1
    ids, _ = _search_layer(X, q, ep, ef, nbrs[0], cnts[0], visited, stamp, cv, ct, rv, rt)
    return ids


# ---------------------------------------------------------------- numpy path

def _search_layer_py(X, q, eps, ef, nbrs, cnts, visited, stamp):
    cand: list[tuple[float, int]] = []
    res: list[tuple[float, int]] = []
    for e in eps:
        e = int(e)
        if visited[e] == stamp:
            continue
        visited[e] = stamp
        s = float(X[e] @ q)
        heapq.heappush(cand, (-s, e))
        heapq.heappush(res, (s, -e))
        if len(res) > ef:
            heapq.heappop(res)
    while cand:
        negs, c = heapq.heappop(cand)
        if len(res) >= ef and -negs < res[0][0]:
            break
        nb = nbrs[c, :cnts[c]]
        new = nb[visited[nb] != stamp]
        if new.size == 0:
            continue
        visited[new] = stamp
        sims = X[new] @ q
        for e, s in zip(new.tolist(), sims.tolist()):
            if len(res) < ef or s > res[0][0]:
                heapq.heappush(cand, (-s, e))
                heapq.heappush(res, (s, -e))
                if len(res) > ef:
                    heapq.heappop(res)
    res.sort(key=lambda r: (-r[0], -r[1]))
    return np.array([-t for _, t in res], dtype=np.int64)


def _link_py(X, nbrs, cnts, e, q, cap):
    if cnts[e] < cap:
        nbrs[e, cnts[e]] = q
        cnts[e] += 1
        return
    cur = nbrs[e, :cnts[e]]
    sims = X[cur] @ X[e]
    slot = int(np.argmin(sims))
    if sims[slot] < float(X[q] @ X[e]):
        nbrs[e, slot] = q


def _select_py(X, q, ids, m):
    kept, pruned = [], []
    for c in ids.tolist():
        if len(kept) >= m:
            break
        sq = float(X[c] @ q)
        if all(float(X[c] @ X[r]) < sq for r in kept):
            kept.append(c)
        else:
            pruned.append(c)
    kept.extend(pruned[:m - len(kept)])
    return np.array(kept, dtype=np.int64)


def _build_py(X, levels, max_neighbors, ef_construction, width):
    n = X.shape[0]
    top = int(levels[0])
    n_levels = int(levels.max()) + 1
    nbrs = np.full((n_levels, n, width), -1, dtype=np.int64)
    cnts = np.zeros((n_levels, n), dtype=np.int64)
    visited = np.zeros(n, dtype=np.int64)
    entry, stamp = 0, 0
    for q in range(1, n):
        xq = X[q]
        lq = int(levels[q])
        ep = [entry]
        for lc in range(top, lq, -1):
            stamp += 1
            ep = _search_layer_py(X, xq, ep, 1, nbrs[lc], cnts[lc], visited, stamp)[:1]
        for lc in range(min(top, lq), -1, -1):
            stamp += 1
            ids = _search_layer_py(X, xq, ep, ef_construction, nbrs[lc], cnts[lc], visited, stamp)
            cap = 2 * max_neighbors if lc == 0 else max_neighbors
            sel = _select_py(X, xq, ids, min(max_neighbors, ids.shape[0]))
            m = sel.shape[0]
            nbrs[lc, q, :m] = sel
            cnts[lc, q] = m
            for e in sel.tolist():
                _link_py(X, nbrs[lc], cnts[lc], e, q, cap)
            ep = ids
        if lq > top:
            top, entry = lq, q
    return nbrs, cnts, entry, top


def _reachable_py(nbrs, cnts, starts, reach):
    stack = [s for s in starts if not reach[s]]
    reach[stack] = True
    while stack:
        u = stack.pop()
        nb = nbrs[u, :cnts[u]]
        new = nb[~reach[nb]]
        reach[new] = True
        stack.extend(new.tolist())


def _repair_py(X, nbrs, cnts, entry, width):
    n = X.shape[0]
    reach = np.zeros(n, dtype=bool)
    _reachable_py(nbrs, cnts, [entry], reach)
    added = 0
    for v in range(n):
        if reach[v]:
            continue
        out = nbrs[v, :cnts[v]]
        pool = out[reach[out] & (cnts[out] < width)]
        if pool.size == 0:
            pool = np.flatnonzero(reach & (cnts < width))
        if pool.size == 0:
            return -1
        sims = X[pool] @ X[v]
        u = int(pool[int(np.argmax(sims))])
        nbrs[u, cnts[u]] = v
        cnts[u] += 1
        added += 1
        _reachable_py(nbrs, cnts, [v], reach)
    return added


def _query_py(X, q, nbrs, cnts, entry, top, ef):
    visited = np.zeros(X.shape[0], dtype=np.int64)
    ep = [entry]
    stamp = 0
    for lc in range(top, 0, -1):
        stamp += 1
        ep = _search_layer_py(X, q, ep, 1, nbrs[lc], cnts[lc], visited, stamp)[:1]
    return _search_layer_py(X, q, ep, ef, nbrs[0], cnts[0], visited, stamp + 1)


# ---------------------------------------------------------------- public index

class GraphIndex:
    """Small-world graph over one channel's vectors, searched by inner product."""

    def __init__(self, vectors, max_neighbors: int = 16, ef_construction: int = 200,
                 ef_search: int = 128, seed: int = 0, use_numba: bool | None = None):
        X = np.ascontiguousarray(vectors, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("graph index needs a non-empty (n, d) array")
        if not np.isfinite(X).all():
            raise ValueError("vectors must be finite")
        if max_neighbors < 2:
            raise ValueError("max_neighbors must be >= 2")
        self.vectors = X
        norms2 = np.einsum("ij,ij->i", X, X)
        extra = np.sqrt(np.maximum(norms2.max() - norms2, 0.0))
        self._augmented = np.ascontiguousarray(np.hstack([X, extra[:, None]]))
        self.max_neighbors = max_neighbors
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.seed = seed
        self.use_numba = USE_NUMBA if use_numba is None else use_numba

        rng = np.random.default_rng(seed)
        ml = 1.0 / np.log(max_neighbors)
        levels = np.floor(-np.log(1.0 - rng.random(X.shape[0])) * ml).astype(np.int64)
        self.levels = np.minimum(levels, MAX_LEVEL)
        width = 3 * max_neighbors  # 2M layer-0 links plus repair slots
        build, repair = (_build_numba, _repair_numba) if self.use_numba else (_build_py, _repair_py)
        A = self._augmented
        nbrs, cnts, entry, top = build(A, self.levels, max_neighbors, ef_construction, width)
        added = repair(A, nbrs[0], cnts[0], entry, width)
        if added < 0:
            raise RuntimeError("graph repair ran out of link slots")
        self.repaired = int(added)
        self.neighbors, self.counts = nbrs, cnts
        self.entry, self.top = int(entry), int(top)
        logger.debug("graph n=%d levels=%d repaired=%d", X.shape[0], top + 1, added)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def candidates(self, query, ef: int) -> np.ndarray:
        q = np.append(np.asarray(query, dtype=np.float64), 0.0)
        fn = _query_numba if self.use_numba else _query_py
        return fn(self._augmented, q, self.neighbors, self.counts, self.entry, self.top, int(ef))

    def search(self, query, k: int, ef_search: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """0-based ids and scores of the approximate top-``k``, best first."""
        ef = max(int(ef_search or self.ef_search), int(k))
        q = np.asarray(query, dtype=np.float64)
        ids = np.sort(self.candidates(q, ef))  # ties resolve to the lower id
        sims = kernels.dot_rows(self.vectors[ids], q)
        sel = select_topk(sims, k)
        return ids[sel], sims[sel]


def build_graph_index(vectors, max_neighbors: int = 16, ef_construction: int = 200,
                      seed: int = 0, ef_search: int = 128) -> GraphIndex:
    return GraphIndex(vectors, max_neighbors, ef_construction, ef_search, seed)
