"""Binary formats, all little-endian.

``MMSQ1`` dataset::

    b"MMSQ1" | u32 L | u32 M_total | u32 d | f32[L][M_total][d] | u32 n | n bytes of JSON

``MMPQ1`` codebook::

    b"MMPQ1" | u32 channel | u32 n_subvectors | u32 sub_dim | u32 cardinality
    | f32[n_subvectors][cardinality][sub_dim] | u32 crc32 of everything before it

``MMDT1`` cross-channel table::

    b"MMDT1" | u32 M_total | u32 n_subvectors | u32 half | u32 c_max | u32[M_total] cardinalities
    | f32 entries in the table's layout

JSON metadata is written with sorted keys so identical inputs give identical bytes.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .core import SequenceStore
from .pq_retrieval import CrossModalDistanceTable, half_pair_index
from .quantizers import PQCodebook

DATASET_MAGIC = b"MMSQ1"
CODEBOOK_MAGIC = b"MMPQ1"
TABLE_MAGIC = b"MMDT1"


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _check_magic(f, magic: bytes, path) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")


def dumps_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


# ---------------------------------------------------------------- dataset

def write_dataset(path, store: SequenceStore, metadata: dict | None = None) -> Path:
    path = Path(path)
    meta = dumps_json(metadata or {})
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<III", store.length, store.num_channels, store.dim))
        f.write(store.vectors.astype("<f4").tobytes())
        f.write(struct.pack("<I", len(meta)))
        f.write(meta)
    return path


def read_dataset(path) -> tuple[SequenceStore, dict]:
    path = Path(path)
    with open(path, "rb") as f:
        _check_magic(f, DATASET_MAGIC, path)
        L, M, d = struct.unpack("<III", _read_exact(f, 12, "header"))
        if L < 1 or M < 1 or d < 1:
            raise FormatError(f"{path}: invalid dimensions L={L} M_total={M} d={d}")
        body = _read_exact(f, 4 * L * M * d, "vectors")
        (n,) = struct.unpack("<I", _read_exact(f, 4, "metadata length"))
        raw = _read_exact(f, n, "metadata")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after metadata")
    try:
        meta = json.loads(raw.decode("utf-8")) if n else {}
    except ValueError as exc:
        raise FormatError(f"{path}: metadata is not valid JSON: {exc}") from None
    vectors = np.frombuffer(body, dtype="<f4").reshape(L, M, d)
    return SequenceStore(vectors), meta


# ---------------------------------------------------------------- codebook

def write_codebook(path, codebook: PQCodebook) -> Path:
    path = Path(path)
    head = CODEBOOK_MAGIC + struct.pack("<IIII", codebook.channel, codebook.n_subvectors,
                                        codebook.sub_dim, codebook.cardinality)
    payload = head + codebook.centroids.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))
    return path


def read_codebook(path) -> PQCodebook:
    path = Path(path)
    data = path.read_bytes()
    if data[:len(CODEBOOK_MAGIC)] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:5]!r}, expected {CODEBOOK_MAGIC!r}")
    hlen = len(CODEBOOK_MAGIC) + 16
    if len(data) < hlen + 4:
        raise FormatError(f"{path}: truncated header")
    channel, nb, sub, card = struct.unpack("<IIII", data[len(CODEBOOK_MAGIC):hlen])
    expected = hlen + 4 * nb * sub * card + 4
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} does not match header ({expected})")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise FormatError(f"{path}: CRC32 mismatch")
    cents = np.frombuffer(data[hlen:-4], dtype="<f4").reshape(nb, card, sub)
    return PQCodebook(channel, cents)


# ---------------------------------------------------------------- table

def write_table(path, table: CrossModalDistanceTable) -> Path:
    path = Path(path)
    M = table.num_channels
    cmax = table.entries.shape[-1]
    with open(path, "wb") as f:
        f.write(TABLE_MAGIC)
        f.write(struct.pack("<IIII", M, table.n_subvectors, int(table.half), cmax))
        f.write(struct.pack(f"<{M}I", *table.cardinalities))
        f.write(table.entries.astype("<f4").tobytes())
    return path


def read_table(path, validate: bool = True) -> CrossModalDistanceTable:
    """Load a table; by default spot-check symmetry on a 1% sample."""
    path = Path(path)
    with open(path, "rb") as f:
        _check_magic(f, TABLE_MAGIC, path)
        M, nb, half, cmax = struct.unpack("<IIII", _read_exact(f, 16, "header"))
        card = struct.unpack(f"<{M}I", _read_exact(f, 4 * M, "cardinalities"))
        if half:
            n_pairs = M * (M + 1) // 2
            shape = (n_pairs, nb, cmax, cmax)
        else:
            shape = (M, M, nb, cmax, cmax)
        body = _read_exact(f, 4 * int(np.prod(shape)), "entries")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after entries")
    entries = np.frombuffer(body, dtype="<f4").reshape(shape).astype(np.float32)
    pair_index = half_pair_index(M) if half else None
    table = CrossModalDistanceTable(entries, tuple(card), nb, bool(half), pair_index)
    if validate and not table.check_symmetry(0.01):
        raise FormatError(f"{path}: table fails the symmetry check")
    return table
