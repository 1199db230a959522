"""Record model: layouts, aligned record arrays, key order and digit extraction.

A record is stored as ``record_bytes // 8`` unsigned 64-bit words.  The key
occupies the leading words, most significant word first; the payload follows.
Digits are single bytes taken from the key by shifting, so the ordering does
not depend on host byte order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

CACHE_LINE = 64
KEY_SIZES = (8, 16)
DATA_SIZES = (0, 8, 16, 24)
RADIX = 256

# Options for compiled entry points.  Kernels never allocate, so reference
# counting is switched off; with it on, every inlined array access through
# the workspace tuples costs atomic increments that dominate tiny sorts.
KERNEL = dict(nogil=True, cache=True, _nrt=False)


@dataclass(frozen=True, order=True)
class RecordLayout:
    key_bytes: int
    data_bytes: int = 0

    def __post_init__(self):
        if self.key_bytes not in KEY_SIZES:
            raise ValueError(f"key_bytes must be one of {KEY_SIZES}, got {self.key_bytes}")
        if self.data_bytes not in DATA_SIZES:
            raise ValueError(f"data_bytes must be one of {DATA_SIZES}, got {self.data_bytes}")

    @property
    def record_bytes(self) -> int:
        return self.key_bytes + self.data_bytes

    @property
    def words(self) -> int:
        return self.record_bytes // 8

    @property
    def key_words(self) -> int:
        return self.key_bytes // 8

    def __str__(self):
        return f"{self.key_bytes}+{self.data_bytes}"

    @classmethod
    def parse(cls, text: str) -> "RecordLayout":
        """Parse ``"8+8"`` / ``"8,8"`` / ``"(8,8)"``."""
        cleaned = text.strip().strip("()").replace("+", ",").replace(":", ",")
        parts = [p for p in cleaned.split(",") if p.strip()]
        if len(parts) not in (1, 2):
            raise ValueError(f"cannot parse layout {text!r}")
        return cls(*(int(p) for p in parts))


# The five layouts used by the benchmarks and the acceptance suite.
BENCH_LAYOUTS = (
    RecordLayout(8, 0),
    RecordLayout(8, 8),
    RecordLayout(8, 16),
    RecordLayout(8, 24),
    RecordLayout(16, 0),
)


def aligned_empty(shape, dtype=np.uint64, align: int = CACHE_LINE) -> np.ndarray:
    """Uninitialised C-contiguous array whose first byte sits on an ``align`` boundary."""
    dtype = np.dtype(dtype)
    shape = tuple(shape) if np.iterable(shape) else (int(shape),)
    nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    # keep at least one item so numpy never substitutes its own empty-array pointer
    raw = np.empty(max(nbytes, dtype.itemsize) + align, dtype=np.uint8)
    offset = (-raw.ctypes.data) % align
    flat = raw[offset:offset + max(nbytes, dtype.itemsize)].view(dtype)
    return np.lib.stride_tricks.as_strided(flat, shape, np.empty(shape, dtype).strides) if nbytes == 0 else flat.reshape(shape)


def aligned_zeros(shape, dtype=np.uint64, align: int = CACHE_LINE) -> np.ndarray:
    out = aligned_empty(shape, dtype, align)
    out[...] = 0
    return out


class RecordArray:
    """Contiguous, mutable run of fixed-size records with a declared layout.

    ``data`` is a ``(count, words)`` uint64 view whose base address is
    aligned to 64 B.
    """

    def __init__(self, layout: RecordLayout, data: np.ndarray):
        if data.ndim != 2 or data.shape[1] != layout.words or data.dtype != np.uint64:
            raise ValueError(f"data must be uint64 with shape (count, {layout.words})")
        if not data.flags.c_contiguous:
            raise ValueError("data must be C-contiguous")
        self.layout = layout
        self.data = data

    @classmethod
    def empty(cls, count: int, layout: RecordLayout) -> "RecordArray":
        return cls(layout, aligned_empty((count, layout.words)))

    @classmethod
    def from_words(cls, words, layout: RecordLayout) -> "RecordArray":
        words = np.asarray(words, dtype=np.uint64).reshape(-1, layout.words)
        out = cls.empty(len(words), layout)
        out.data[:] = words
        return out

    @classmethod
    def from_keys(cls, keys, layout: RecordLayout, payload=None) -> "RecordArray":
        """Build records from Python-int keys; payload words default to the record index."""
        keys = [int(k) for k in keys]
        out = cls.empty(len(keys), layout)
        kw = layout.key_words
        for i, k in enumerate(keys):
            for w in range(kw):
                out.data[i, w] = (k >> (64 * (kw - 1 - w))) & 0xFFFFFFFFFFFFFFFF
        if layout.data_bytes:
            if payload is None:
                out.data[:, kw:] = np.arange(len(keys), dtype=np.uint64)[:, None]
            else:
                out.data[:, kw:] = np.asarray(payload, dtype=np.uint64).reshape(len(keys), -1)
        return out

    def __len__(self):
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def is_aligned(self) -> bool:
        return self.data.ctypes.data % CACHE_LINE == 0

    def key(self, i: int) -> int:
        return key_of(self.data[i], self.layout)

    def keys(self) -> list[int]:
        return [key_of(row, self.layout) for row in self.data]

    def copy(self) -> "RecordArray":
        return RecordArray.from_words(self.data, self.layout)

    def __repr__(self):
        return f"RecordArray(layout={self.layout}, count={self.count})"


def key_of(row, layout: RecordLayout) -> int:
    """Full-width key of one record row as a Python int."""
    k = 0
    for w in range(layout.key_words):
        k = (k << 64) | int(row[w])
    return k


def digit_at(key: int, depth: int, key_bytes: int = 8) -> int:
    """Byte ``depth`` of ``key`` counting from the most significant end."""
    assert 0 <= depth < key_bytes, "depth out of range"
    return (key >> (8 * (key_bytes - 1 - depth))) & 0xFF


def key_compare(a: int, b: int) -> int:
    """Unsigned comparison of two keys: -1, 0 or 1."""
    return (a > b) - (a < b)


def msb_word(key: int) -> int:
    """Upper 8 bytes of a 16 B key."""
    return (key >> 64) & 0xFFFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# compiled helpers shared by the kernels

@njit(inline="always")
def digit(a, r, depth):
    w = depth >> 3
    shift = np.uint64(56 - 8 * (depth & 7))
    return np.int64((a[r, w] >> shift) & np.uint64(0xFF))


@njit(inline="always")
def rec_lt(a, i, j, kw):
    """Key of row i < key of row j."""
    if kw == 1:
        return a[i, 0] < a[j, 0]
    return (a[i, 0] < a[j, 0]) | ((a[i, 0] == a[j, 0]) & (a[i, 1] < a[j, 1]))


@njit(inline="always")
def rec_lt_key(a, i, k0, k1, kw):
    """Key of row i < (k0, k1)."""
    if kw == 1:
        return a[i, 0] < k0
    return (a[i, 0] < k0) | ((a[i, 0] == k0) & (a[i, 1] < k1))


@njit(inline="always")
def key_lt_rec(k0, k1, a, i, kw):
    """(k0, k1) < key of row i."""
    if kw == 1:
        return k0 < a[i, 0]
    return (k0 < a[i, 0]) | ((k0 == a[i, 0]) & (k1 < a[i, 1]))


@njit(inline="always")
def copy_rec(dst, di, src, si):
    for w in range(src.shape[1]):
        dst[di, w] = src[si, w]


@njit(inline="always")
def swap_rec(a, i, j):
    for w in range(a.shape[1]):
        t = a[i, w]
        a[i, w] = a[j, w]
        a[j, w] = t


@njit(**KERNEL)
def is_sorted_kernel(a, kw):
    for i in range(1, a.shape[0]):
        if rec_lt(a, i, i - 1, kw):
            return False
    return True
