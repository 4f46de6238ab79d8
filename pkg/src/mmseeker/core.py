"""Shared data model: records, sequences, fusion weights and top-K results."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

#: Conventional channel labels for the four-channel layout. Channel 0 is always the query.
CHANNEL_NAMES = ("query", "text", "image", "attributes")
QUERY_CHANNEL = 0

class _EmptyQuery:
    """Singleton marking a browse behavior that carries no search query."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "EMPTY_QUERY"

    def __reduce__(self):
        return (_EmptyQuery, ())


#: ``query_id`` of a padded browse behavior (its query vector is all zeros).
EMPTY_QUERY = _EmptyQuery()

_SUM_TOL = 1e-6


class InvalidSequenceError(ValueError):
    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid sequence: {head}{more}")


def channel_name(index: int, num_channels: int) -> str:
    if not 0 <= index < num_channels:
        raise ValueError(f"channel {index} out of range [0, {num_channels})")
    if num_channels == len(CHANNEL_NAMES):
        return CHANNEL_NAMES[index]
    return "query" if index == QUERY_CHANNEL else f"item{index}"


@dataclass(frozen=True)
class MultiModalRecord:
    """One sequence position: a query vector followed by the item-modality vectors.

    ``vectors`` is normally an ``(M_total, d)`` array. A ragged list of 1-D
    arrays is tolerated so that malformed input can reach
    :func:`validate_sequence` instead of failing at construction.
    """

    position: int
    vectors: Any
    query_id: Any = None
    item_id: Any = None

    @property
    def is_padded(self) -> bool:
        return self.query_id is EMPTY_QUERY

    def as_array(self) -> np.ndarray:
        arr = np.asarray(self.vectors)
        if arr.ndim != 2 or arr.dtype == object:
            raise ValueError(f"record {self.position}: vectors are ragged")
        return arr

    @classmethod
    def padded(cls, position: int, item_vectors: np.ndarray, item_id: Any = None) -> "MultiModalRecord":
        """Browse behavior: zero query vector prepended to the item modalities."""
        items = np.asarray(item_vectors)
        vectors = np.vstack([np.zeros((1, items.shape[1]), dtype=items.dtype), items])
        return cls(position, vectors, EMPTY_QUERY, item_id)


@dataclass(frozen=True)
class Violation:
    kind: str
    position: int | None
    detail: str

    def __str__(self) -> str:
        where = f"position {self.position}" if self.position is not None else "sequence"
        return f"{self.kind} at {where}: {self.detail}"


def validate_sequence(records: Iterable[MultiModalRecord] | "SequenceStore",
                      num_channels: int | None = None, dim: int | None = None) -> list[Violation]:
    """List everything wrong with a sequence; an empty list means valid.

    Expected channel count and dimension default to the most common values
    among the records, so a single odd vector is reported once.
    """
    recs = list(records)
    out: list[Violation] = []
    if not recs:
        return [Violation("empty", None, "sequence has no records")]

    if num_channels is None:
        num_channels = Counter(len(r.vectors) for r in recs).most_common(1)[0][0]
    if dim is None:
        dim = Counter(len(v) for r in recs for v in r.vectors).most_common(1)[0][0]

    seen: set[int] = set()
    last = None
    for r in recs:
        if r.position in seen:
            out.append(Violation("duplicate-position", r.position, "position repeated"))
        elif last is not None and r.position < last:
            out.append(Violation("order", r.position, f"follows position {last}"))
        seen.add(r.position)
        last = r.position if last is None else max(last, r.position)

        if len(r.vectors) != num_channels:
            out.append(Violation("channel-count", r.position,
                                 f"{len(r.vectors)} channels, expected {num_channels}"))
        for m, v in enumerate(r.vectors):
            v = np.asarray(v)
            if v.ndim != 1 or v.shape[0] != dim:
                out.append(Violation("dimension-mismatch", r.position,
                                     f"channel {m} has shape {v.shape}, expected ({dim},)"))
                continue
            if not np.all(np.isfinite(v)):
                out.append(Violation("non-finite", r.position, f"channel {m} has non-finite values"))
        if r.is_padded and len(r.vectors) > 0:
            q = np.asarray(r.vectors[QUERY_CHANNEL])
            if q.ndim == 1 and np.isfinite(q).all() and np.any(q != 0):
                out.append(Violation("padding", r.position, "empty query must be the zero vector"))
    return out


class SequenceStore:
    """Immutable ``(L, M_total, d)`` lifelong sequence, positions 1..L.

    Vectors are kept in a single read-only float32 array in position-major,
    channel-second order (the same layout as the dataset file).
    """

    def __init__(self, vectors: np.ndarray, query_ids: Sequence[Any] | None = None,
                 item_ids: Sequence[Any] | None = None):
        arr = np.ascontiguousarray(vectors, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"expected (L, M_total, d) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("sequence must hold at least one record")
        if not np.isfinite(arr).all():
            bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=(1, 2)))[0]) + 1
            raise ValueError(f"non-finite values at position {bad}")
        arr.setflags(write=False)
        self._vectors = arr
        n = arr.shape[0]
        self._query_ids = list(query_ids) if query_ids is not None else list(range(1, n + 1))
        self._item_ids = list(item_ids) if item_ids is not None else list(range(1, n + 1))
        if len(self._query_ids) != n or len(self._item_ids) != n:
            raise ValueError("id lists must match sequence length")
        self._channel_cache: dict[int, np.ndarray] = {}

    @classmethod
    def from_records(cls, records: Iterable[MultiModalRecord]) -> "SequenceStore":
        recs = list(records)
        problems = validate_sequence(recs)
        if problems:
            raise InvalidSequenceError(problems)
        expected = list(range(1, len(recs) + 1))
        if [r.position for r in recs] != expected:
            raise InvalidSequenceError([Violation("order", None, "positions must run 1..L")])
        vectors = np.stack([r.as_array() for r in recs])
        return cls(vectors, [r.query_id for r in recs], [r.item_id for r in recs])

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def length(self) -> int:
        return self._vectors.shape[0]

    @property
    def num_channels(self) -> int:
        return self._vectors.shape[1]

    @property
    def dim(self) -> int:
        return self._vectors.shape[2]

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, index: int) -> MultiModalRecord:
        """Record at 0-based ``index`` (position ``index + 1``)."""
        if index < 0:
            index += self.length
        return MultiModalRecord(index + 1, self._vectors[index], self._query_ids[index],
                                self._item_ids[index])

    def __iter__(self) -> Iterator[MultiModalRecord]:
        for i in range(self.length):
            yield self[i]

    @property
    def records(self) -> list[MultiModalRecord]:
        return list(self)

    def channel(self, m: int) -> np.ndarray:
        """Contiguous ``(L, d)`` copy of one channel, cached."""
        if m not in self._channel_cache:
            c = np.ascontiguousarray(self._vectors[:, m, :])
            c.setflags(write=False)
            self._channel_cache[m] = c
        return self._channel_cache[m]

    def __repr__(self) -> str:
        return f"SequenceStore(L={self.length}, M_total={self.num_channels}, d={self.dim})"


@dataclass(frozen=True)
class FusionWeights:
    """Query weight ``lam``, item-modality weights, and the per-channel ``gamma``.

    ``gamma[0] = lam`` and ``gamma[m] = (1 - lam) * item_weights[m - 1]``.
    """

    lam: float
    item_weights: tuple[float, ...]
    gamma: np.ndarray = field(repr=False)

    @property
    def num_channels(self) -> int:
        return len(self.gamma)

    @classmethod
    def from_gamma(cls, gamma: Sequence[float]) -> "FusionWeights":
        g = np.asarray(gamma, dtype=np.float64)
        if g.ndim != 1 or g.size < 2:
            raise ValueError("gamma needs a query weight and at least one item weight")
        if np.any(g < 0):
            raise ValueError(f"gamma must be nonnegative, got {g.tolist()}")
        if abs(g.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"gamma must sum to 1, got {g.sum():.9g}")
        lam = float(g[0])
        rest = g[1:]
        tail = rest.sum()
        w = rest / tail if tail > 0 else np.full(rest.size, 1.0 / rest.size)
        return derive_gamma(lam, w)


def derive_gamma(lam: float, item_weights: Sequence[float]) -> FusionWeights:
    """Merge a query weight and item-modality weights into per-channel weights."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    w = np.asarray(item_weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("need at least one item weight")
    if np.any(w < 0):
        raise ValueError(f"item weights must be nonnegative, got {w.tolist()}")
    if abs(w.sum() - 1.0) > _SUM_TOL:
        raise ValueError(f"item weights must sum to 1, got {w.sum():.9g}")
    w = w / w.sum()
    gamma = np.concatenate([[lam], (1.0 - lam) * w])
    gamma.setflags(write=False)
    return FusionWeights(float(lam), tuple(float(x) for x in w), gamma)


def select_topk(scores: np.ndarray, k: int, largest: bool = True) -> np.ndarray:
    """0-based indices of the ``k`` best scores, best first, ties by lower index."""
    s = np.asarray(scores)
    if not largest:
        s = -s.astype(np.float64)
    n = s.shape[0]
    k = min(int(k), n)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k < n:
        part = np.argpartition(-s, k - 1)
        cand = np.flatnonzero(s >= s[part[k - 1]])
    else:
        cand = np.arange(n)
    order = np.lexsort((cand, -s[cand]))
    return cand[order[:k]].astype(np.int64)


@dataclass
class TopKResult:
    """Best-first ``(position, score)`` list produced by one retrieval method.

    ``counters`` holds the operation counts the method performed (lookups,
    score evaluations, probes, ...). ``short`` marks a result with fewer than
    the requested ``k`` entries.
    """

    positions: np.ndarray
    scores: np.ndarray
    method_tag: str
    k: int
    counters: dict[str, int] = field(default_factory=dict)
    short: bool = False

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.positions.shape != self.scores.shape:
            raise ValueError("positions and scores must align")

    @classmethod
    def from_scores(cls, scores: np.ndarray, k: int, method_tag: str, *, largest: bool = True,
                    index: np.ndarray | None = None, counters: dict[str, int] | None = None
                    ) -> "TopKResult":
        """Select the top ``k`` of ``scores``; ``index`` maps entries to 0-based positions."""
        sel = select_topk(scores, k, largest=largest)
        rows = sel if index is None else np.asarray(index)[sel]
        res = cls(rows + 1, np.asarray(scores, dtype=np.float64)[sel], method_tag, int(k),
                  dict(counters or {}))
        res.short = len(res) < k
        return res

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(p), float(s)) for p, s in zip(self.positions, self.scores)]

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    def prefix(self, k: int) -> np.ndarray:
        return self.positions[:k]
