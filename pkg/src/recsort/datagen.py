"""Deterministic benchmark inputs, the multiset digest and the record file format.

Every random word comes from numpy's Philox4x64-10 bit generator (the
Random123 counter-based design).  Each purpose (keys, payload, Zipf draws,
shuffles) has its own Philox key derived from the seed, and records are
generated in chunks by advancing the counter, so the output never depends
on the chunk size.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .records import KERNEL, RecordArray, RecordLayout, is_sorted_kernel

KINDS = ("uniform", "zipf", "equal", "sorted", "reverse", "almost_sorted")
CHUNK = 1 << 20            # records per generation chunk; a multiple of 4

_KEY, _PAYLOAD, _ZIPF, _SHUFFLE, _EQUAL = range(5)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True)
class Distribution:
    kind: str = "uniform"
    seed: int = 0
    zipf_theta: float = 1.0
    zipf_universe: int = 1 << 20

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution {self.kind!r}; expected one of {KINDS}")
        if self.zipf_theta <= 0:
            raise ValueError("zipf_theta must be positive")
        if self.zipf_universe < 1:
            raise ValueError("zipf_universe must be >= 1")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must fit in 64 bits")


def _stream(seed: int, purpose: int, start_block: int = 0) -> np.random.Philox:
    bg = np.random.Philox(key=seed | (purpose << 64))
    if start_block:
        bg.advance(start_block)
    return bg


def raw_words(seed: int, purpose: int, start: int, count: int) -> np.ndarray:
    """Words ``start .. start+count`` of one purpose stream (start must be a multiple of 4)."""
    assert start % 4 == 0, "stream offsets are whole Philox blocks"
    return _stream(seed, purpose, start // 4).random_raw(count).astype(np.uint64, copy=False)


@njit(inline="always")
def _mix(z):
    # splitmix64 finaliser: a bijection on 64-bit words
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(**KERNEL)
def _mix_array(x, out):
    for i in range(x.shape[0]):
        out[i] = _mix(x[i])


@lru_cache(maxsize=8)
def zipf_cdf(theta: float, universe: int) -> np.ndarray:
    w = np.arange(1, universe + 1, dtype=np.float64) ** -theta
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return cdf


def zipf_ranks(u: np.ndarray, theta: float, universe: int) -> np.ndarray:
    """1-based Zipf ranks for uniform draws ``u`` in [0, 1)."""
    cdf = zipf_cdf(theta, universe)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, universe - 1).astype(np.uint64) + np.uint64(1)


def _fill_keys(out: np.ndarray, layout: RecordLayout, dist: Distribution, lo: int, hi: int):
    kw = layout.key_words
    m = hi - lo
    if dist.kind == "zipf":
        raw = raw_words(dist.seed, _ZIPF, lo, m)
        u = (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        ranks = zipf_ranks(u, dist.zipf_theta, dist.zipf_universe)
        _mix_array(ranks, out[:, 0])
        if kw == 2:
            _mix_array(ranks + _GOLDEN, out[:, 1])
    elif dist.kind == "equal":
        key = raw_words(dist.seed, _EQUAL, 0, kw)
        out[:, :kw] = key
    else:
        out[:, :kw] = raw_words(dist.seed, _KEY, lo * kw, m * kw).reshape(m, kw)


def _fill_payload(out: np.ndarray, layout: RecordLayout, dist: Distribution, lo: int, hi: int):
    kw, words = layout.key_words, layout.words
    if words == kw:
        return
    m = hi - lo
    out[:, kw] = np.arange(lo, hi, dtype=np.uint64)        # sequence tag
    extra = words - kw - 1
    if extra:
        out[:, kw + 1:] = raw_words(dist.seed, _PAYLOAD, lo * extra, m * extra).reshape(m, extra)


def _order_keys(arr: RecordArray, descending: bool):
    kw = arr.layout.key_words
    d = arr.data
    if kw == 1:
        order = np.argsort(d[:, 0], kind="stable")
    else:
        order = np.lexsort((d[:, 1], d[:, 0]))
    if descending:
        order = order[::-1]
    d[:, :kw] = d[order, :kw]


def generate(n: int, layout: RecordLayout, dist: Distribution | str = "uniform",
             seed: int | None = None, out: RecordArray | None = None) -> RecordArray:
    """``n`` records whose keys follow ``dist``; identical parameters give identical bytes.

    ``out`` (``n`` records of ``layout``) is overwritten instead of allocating.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if isinstance(dist, str):
        dist = Distribution(dist, seed=seed or 0)
    elif seed is not None:
        raise ValueError("pass the seed inside the Distribution")
    if out is None:
        arr = RecordArray.empty(n, layout)
    elif out.count != n or out.layout != layout:
        raise ValueError("out must hold exactly n records of the requested layout")
    else:
        arr = out
    for lo in range(0, n, CHUNK):
        hi = min(n, lo + CHUNK)
        _fill_keys(arr.data[lo:hi], layout, dist, lo, hi)
    if dist.kind in ("sorted", "reverse", "almost_sorted"):
        _order_keys(arr, dist.kind == "reverse")
    if dist.kind == "almost_sorted" and n >= 2:
        swaps = max(1, n // 100)
        raw = raw_words(dist.seed, _SHUFFLE, 0, 2 * swaps)
        pos = (raw % np.uint64(n)).astype(np.int64).reshape(swaps, 2)
        kw = layout.key_words
        for i, j in pos:
            arr.data[[i, j], :kw] = arr.data[[j, i], :kw]
    for lo in range(0, n, CHUNK):
        hi = min(n, lo + CHUNK)
        _fill_payload(arr.data[lo:hi], layout, dist, lo, hi)
    return arr


# ---------------------------------------------------------------------------
# multiset digest

@njit(**KERNEL)
def _digest_kernel(a):
    W = a.shape[1]
    t1 = np.uint64(0)
    t2 = np.uint64(0)
    for r in range(a.shape[0]):
        h = np.uint64(W)
        for w in range(W):
            h = _mix(h ^ a[r, w]) + np.uint64(w + 1) * _GOLDEN
        t1 += h
        t2 += _mix(h ^ _GOLDEN)
    return t1, t2


def digest(arr: RecordArray) -> tuple[int, int]:
    """Order-independent 128-bit fingerprint of the record multiset."""
    h1, h2 = _digest_kernel(arr.data)
    return int(h1), int(h2)


def is_sorted(arr: RecordArray) -> bool:
    return bool(is_sorted_kernel(arr.data, arr.layout.key_words))


def verify_sorted(arr: RecordArray, original_digest: tuple[int, int]) -> bool:
    """Keys non-decreasing and the record multiset unchanged."""
    return is_sorted(arr) and digest(arr) == tuple(original_digest)


# ---------------------------------------------------------------------------
# record files

MAGIC = b"RDL2"
VERSION = 1
HEADER = struct.Struct("<4sHBBQQ")


class RecordFileError(IOError):
    pass


def write_records(path, arr: RecordArray, seed: int = 0):
    """Write header plus little-endian words; goes through a temp file so no partial output remains."""
    path = os.fspath(path)
    lay = arr.layout
    header = HEADER.pack(MAGIC, VERSION, lay.key_bytes, lay.data_bytes, arr.count, seed)
    fd, tmp = tempfile.mkstemp(prefix=".recsort-", dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            for lo in range(0, arr.count, CHUNK):
                f.write(arr.data[lo:lo + CHUNK].astype("<u8", copy=False).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_header(path) -> tuple[RecordLayout, int, int]:
    with open(path, "rb") as f:
        raw = f.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise RecordFileError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, version, kb, db, count, seed = HEADER.unpack(raw)
    if magic != MAGIC:
        raise RecordFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise RecordFileError(f"{path}: unsupported version {version}")
    try:
        layout = RecordLayout(kb, db)
    except ValueError as e:
        raise RecordFileError(f"{path}: {e}") from None
    return layout, count, seed


def read_records(path) -> tuple[RecordArray, int]:
    """Load a record file; returns the array and the seed stored in its header."""
    layout, count, seed = read_header(path)
    expected = HEADER.size + count * layout.record_bytes
    size = os.path.getsize(path)
    if size != expected:
        raise RecordFileError(f"{path}: expected {expected} bytes for {count} records, found {size}")
    arr = RecordArray.empty(count, layout)
    with open(path, "rb") as f:
        f.seek(HEADER.size)
        flat = arr.data.reshape(-1)
        view = flat.view(np.uint8)
        got = f.readinto(memoryview(view))
    if got != view.nbytes:
        raise RecordFileError(f"{path}: short read")
    if not np.little_endian:
        flat.byteswap(inplace=True)
    return arr, seed
