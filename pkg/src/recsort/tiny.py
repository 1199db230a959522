"""Tiny-array sorters and the layout-dispatched hybrid.

All kernels work on a ``(count, words)`` uint64 record array in place over
``[lo, lo + n)`` and take a per-thread :class:`Workspace`, so no allocation
happens per call.  ``kw`` is the key width in words (1 or 2).
"""
from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from functools import lru_cache
from enum import IntEnum

import numpy as np
from numba import njit

from .netgen import ComparatorNetwork, network_for
from .records import (
    KERNEL, RecordArray, RecordLayout, aligned_zeros, copy_rec, key_lt_rec, rec_lt, rec_lt_key, swap_rec,
)

MAX_SN_N = 64
BQS_BLOCK = 64
BQS_IS_CEILING = 16
WORKSPACE_ROWS = 256
_STACK_ROWS = 128
_SHELL_GAPS = np.array([1, 4, 10, 23, 57, 132, 301, 701, 1750, 3937, 8858, 19930,
                        44842, 100894, 227011, 510774, 1149241], dtype=np.int64)
_U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)

# workspace.stats slots
ST_ES_PLACEMENTS = 0
ST_COMPARATORS = 1
ST_IS_SHIFTS = 2
ST_BQS_MAX_LEVEL = 3
ST_HEAPSORTS = 4
ST_HYBRID_CALLS = 5
N_STATS = 8


class Algo(IntEnum):
    IS = 0
    SHELL = 1
    ES = 2
    SN = 3
    ES_IS = 4
    BQS = 5          # BlockQuicksort with insertion-sort leaves (the original scheme)
    BQS_SN = 6
    BQS_ES = 7
    BQS_ES_IS = 8

    @property
    def label(self) -> str:
        return {Algo.ES_IS: "ES+IS", Algo.SHELL: "Shell"}.get(self, self.name)

    @property
    def leaf(self) -> "Algo | None":
        return {Algo.BQS: Algo.IS, Algo.BQS_SN: Algo.SN, Algo.BQS_ES: Algo.ES,
                Algo.BQS_ES_IS: Algo.ES_IS}.get(self)


Workspace = namedtuple("Workspace", "scratch keys ranks offs stack tmp stats")
NetTable = namedtuple("NetTable", "off lo hi")
TinyPlan = namedtuple("TinyPlan", "seg_max seg_algo leaf_ceiling block")


def make_workspace(words: int, rows: int = WORKSPACE_ROWS, block: int = BQS_BLOCK) -> Workspace:
    # cache-line aligned so workspaces of different threads never share a line
    return Workspace(
        scratch=aligned_zeros((rows, words)),
        keys=aligned_zeros((2, max(rows, MAX_SN_N))),
        ranks=aligned_zeros(max(rows, MAX_SN_N), np.int64),
        offs=aligned_zeros((2, block), np.int64),
        stack=aligned_zeros((_STACK_ROWS, 3), np.int64),
        tmp=aligned_zeros((1, words)),
        stats=aligned_zeros(N_STATS, np.int64),
    )


def _build_net_table(max_n: int = MAX_SN_N) -> NetTable:
    off = np.zeros(max_n + 2, np.int64)
    lo_parts, hi_parts = [], []
    for n in range(max_n + 1):
        lo, hi = network_for(n).index_arrays()
        lo_parts.append(lo)
        hi_parts.append(hi)
        off[n + 1] = off[n] + len(lo)
    return NetTable(off, np.concatenate(lo_parts), np.concatenate(hi_parts))


NET_TABLE = _build_net_table()


# ---------------------------------------------------------------------------
# rule table

@dataclass(frozen=True)
class TinyDispatchRule:
    """Ordered ``(max_n, algorithm)`` segments; the last one has ``max_n=None``."""

    layout: RecordLayout
    segments: tuple[tuple[int | None, Algo], ...]

    def __post_init__(self):
        segs = tuple((m, Algo(a)) for m, a in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[-1][0] is not None:
            raise ValueError("last segment must be unbounded (max_n=None)")
        bounds = [m for m, _ in segs[:-1]]
        if any(m is None for m in bounds) or bounds != sorted(set(bounds)):
            raise ValueError("segment bounds must be strictly increasing")
        if any(m < 0 for m in bounds):
            raise ValueError("segment bounds must be non-negative")
        for m, a in segs:
            if a.leaf is None and m is None:
                raise ValueError(f"{a.label} cannot serve unbounded sizes")
            if a in (Algo.SN,) and m is not None and m > MAX_SN_N:
                raise ValueError(f"sorting networks are only materialised up to n={MAX_SN_N}")
            if a in (Algo.ES_IS, Algo.BQS_ES_IS) and self.layout.key_bytes != 16:
                raise ValueError("ES+IS needs 16 B keys")

    def algorithm_for(self, n: int) -> Algo:
        for m, a in self.segments:
            if m is None or n <= m:
                return a
        raise AssertionError("unreachable")

    @property
    def ceiling(self) -> int:
        """Largest n sorted without partitioning."""
        bounded = [m for m, a in self.segments if m is not None and a.leaf is None]
        return max(bounded, default=0)

    @property
    def leaf_ceiling(self) -> int:
        final = self.segments[-1][1]
        leaf = final.leaf
        if leaf == Algo.IS:
            return BQS_IS_CEILING
        ceilings = [m for m, a in self.segments if a == leaf and m is not None]
        return max(ceilings, default=BQS_IS_CEILING)

    def plan(self, block: int = BQS_BLOCK) -> TinyPlan:
        seg_max = np.array([-1 if m is None else m for m, _ in self.segments], np.int64)
        seg_algo = np.array([int(a) for _, a in self.segments], np.int64)
        return TinyPlan(seg_max, seg_algo, self.leaf_ceiling, block)


@lru_cache(maxsize=None)
def default_rule(layout: RecordLayout) -> TinyDispatchRule:
    """Fixed per-layout hybrid table, used unless a sort configures its own rule."""
    if layout.key_bytes == 16:
        segs = ((24, Algo.ES_IS), (None, Algo.BQS_ES_IS))
    elif layout.data_bytes == 0:
        segs = ((64, Algo.SN), (None, Algo.BQS_SN))
    elif layout.data_bytes == 8:
        segs = ((16, Algo.ES), (32, Algo.SN), (None, Algo.BQS_SN))
    else:
        segs = ((24, Algo.ES), (None, Algo.BQS_ES))
    return TinyDispatchRule(layout, segs)


def single_rule(layout: RecordLayout, algo: Algo) -> TinyDispatchRule:
    """Rule that runs ``algo`` at every tiny size n <= 64.

    Larger n fall back to a partitioning variant; partitioning variants get
    their usual leaf ceiling.
    """
    algo = Algo(algo)
    if algo.leaf is None:
        return TinyDispatchRule(layout, ((MAX_SN_N, algo), (None, Algo.BQS if algo != Algo.SN else Algo.BQS_SN)))
    leaf = algo.leaf
    if leaf == Algo.IS:
        return TinyDispatchRule(layout, ((BQS_IS_CEILING, Algo.IS), (None, algo)))
    ceiling = {Algo.SN: MAX_SN_N, Algo.ES: 24, Algo.ES_IS: 24}[leaf]
    return TinyDispatchRule(layout, ((ceiling, leaf), (None, algo)))


# ---------------------------------------------------------------------------
# branchless compare-exchange, one variant per record shape

@njit(inline="always")
def _cx_w1(a, i, j):
    x = a[i, 0]
    y = a[j, 0]
    a[i, 0] = min(x, y)
    a[j, 0] = max(x, y)


@njit(inline="always")
def _cx_w2(a, i, j):
    # key via min/max, payload via an all-ones/all-zeros xor mask
    x0 = a[i, 0]
    x1 = a[i, 1]
    y0 = a[j, 0]
    y1 = a[j, 1]
    m = np.uint64(0) - np.uint64(x0 > y0)
    t1 = (x1 ^ y1) & m
    a[i, 0] = min(x0, y0)
    a[j, 0] = max(x0, y0)
    a[i, 1] = x1 ^ t1
    a[j, 1] = y1 ^ t1


@njit(inline="always")
def _cx_w3(a, i, j):
    x0 = a[i, 0]
    x1 = a[i, 1]
    x2 = a[i, 2]
    y0 = a[j, 0]
    y1 = a[j, 1]
    y2 = a[j, 2]
    m = np.uint64(0) - np.uint64(x0 > y0)
    t1 = (x1 ^ y1) & m
    t2 = (x2 ^ y2) & m
    a[i, 0] = min(x0, y0)
    a[j, 0] = max(x0, y0)
    a[i, 1] = x1 ^ t1
    a[j, 1] = y1 ^ t1
    a[i, 2] = x2 ^ t2
    a[j, 2] = y2 ^ t2


@njit(inline="always")
def _cx_w4(a, i, j):
    x0 = a[i, 0]
    x1 = a[i, 1]
    x2 = a[i, 2]
    x3 = a[i, 3]
    y0 = a[j, 0]
    y1 = a[j, 1]
    y2 = a[j, 2]
    y3 = a[j, 3]
    m = np.uint64(0) - np.uint64(x0 > y0)
    t1 = (x1 ^ y1) & m
    t2 = (x2 ^ y2) & m
    t3 = (x3 ^ y3) & m
    a[i, 0] = min(x0, y0)
    a[j, 0] = max(x0, y0)
    a[i, 1] = x1 ^ t1
    a[j, 1] = y1 ^ t1
    a[i, 2] = x2 ^ t2
    a[j, 2] = y2 ^ t2
    a[i, 3] = x3 ^ t3
    a[j, 3] = y3 ^ t3


@njit(inline="always")
def _cx_k2w2(a, i, j):
    x0 = a[i, 0]
    x1 = a[i, 1]
    y0 = a[j, 0]
    y1 = a[j, 1]
    gt = (x0 > y0) | ((x0 == y0) & (x1 > y1))
    a[i, 0] = y0 if gt else x0
    a[j, 0] = x0 if gt else y0
    a[i, 1] = y1 if gt else x1
    a[j, 1] = x1 if gt else y1


@njit(inline="always")
def _cx_generic(a, i, j, kw):
    if kw == 1:
        gt = a[i, 0] > a[j, 0]
    else:
        gt = (a[i, 0] > a[j, 0]) | ((a[i, 0] == a[j, 0]) & (a[i, 1] > a[j, 1]))
    m = np.uint64(0) - np.uint64(gt)
    for w in range(a.shape[1]):
        x = a[i, w]
        y = a[j, w]
        t = (x ^ y) & m
        a[i, w] = x ^ t
        a[j, w] = y ^ t


@njit(inline="always")
def _run_network(a, lo, ci, cj, c0, c1, kw, stats):
    """Execute comparators ``c0..c1`` of (ci, cj) on rows offset by ``lo``."""
    W = a.shape[1]
    if kw == 1 and W == 1:
        for c in range(c0, c1):
            _cx_w1(a, lo + ci[c], lo + cj[c])
    elif kw == 1 and W == 2:
        for c in range(c0, c1):
            _cx_w2(a, lo + ci[c], lo + cj[c])
    elif kw == 1 and W == 3:
        for c in range(c0, c1):
            _cx_w3(a, lo + ci[c], lo + cj[c])
    elif kw == 1 and W == 4:
        for c in range(c0, c1):
            _cx_w4(a, lo + ci[c], lo + cj[c])
    elif kw == 2 and W == 2:
        for c in range(c0, c1):
            _cx_k2w2(a, lo + ci[c], lo + cj[c])
    else:
        for c in range(c0, c1):
            _cx_generic(a, lo + ci[c], lo + cj[c], kw)
    stats[ST_COMPARATORS] += c1 - c0


@njit(inline="always")
def _network_sort(a, lo, n, kw, net, stats):
    if n > net.off.shape[0] - 2:
        raise ValueError("no materialised network for this size")
    _run_network(a, lo, net.lo, net.hi, net.off[n], net.off[n + 1], kw, stats)


# ---------------------------------------------------------------------------
# insertion and Shell sort

@njit(inline="always")
def _insertion(a, lo, hi, kw, tmp, stats):
    shifts = 0
    for i in range(lo + 1, hi):
        if not rec_lt(a, i, i - 1, kw):
            continue
        copy_rec(tmp, 0, a, i)
        k0 = tmp[0, 0]
        k1 = tmp[0, 1] if kw == 2 else np.uint64(0)
        j = i - 1
        copy_rec(a, i, a, j)
        while j > lo and key_lt_rec(k0, k1, a, j - 1, kw):
            copy_rec(a, j, a, j - 1)
            j -= 1
        copy_rec(a, j, tmp, 0)
        shifts += i - j
    stats[ST_IS_SHIFTS] += shifts


@njit(inline="always")
def _shell(a, lo, hi, kw, tmp):
    n = hi - lo
    g = 0
    while g + 1 < _SHELL_GAPS.shape[0] and _SHELL_GAPS[g + 1] < n:
        g += 1
    while g >= 0:
        gap = _SHELL_GAPS[g]
        for i in range(lo + gap, hi):
            if not rec_lt(a, i, i - gap, kw):
                continue
            copy_rec(tmp, 0, a, i)
            k0 = tmp[0, 0]
            k1 = tmp[0, 1] if kw == 2 else np.uint64(0)
            j = i
            while j - gap >= lo and key_lt_rec(k0, k1, a, j - gap, kw):
                copy_rec(a, j, a, j - gap)
                j -= gap
            copy_rec(a, j, tmp, 0)
        g -= 1


# ---------------------------------------------------------------------------
# enumeration sort

@njit(inline="always")
def _ranks_w1(keys, ranks, n, width):
    # fixed trip count; padding keys are all-ones and never counted.
    # (key, index) order makes every rank unique and ties keep input order.
    for i in range(n):
        k = keys[0, i]
        r = np.int64(0)
        for j in range(width):
            r += np.int64((keys[0, j] < k) | ((keys[0, j] == k) & (j < i)))
        ranks[i] = r


@njit(inline="always")
def _ranks_fixed(a, lo, ranks, n):
    # n is a compile-time constant at every call site, so the loops unroll
    for i in range(n):
        k = a[lo + i, 0]
        r = np.int64(0)
        for j in range(n):
            r += np.int64((a[lo + j, 0] < k) | ((a[lo + j, 0] == k) & (j < i)))
        ranks[i] = r


@njit(inline="always")
def _ranks_w2(keys, ranks, n):
    for i in range(n):
        h = keys[0, i]
        l = keys[1, i]
        r = np.int64(0)
        for j in range(n):
            hj = keys[0, j]
            lj = keys[1, j]
            less = (hj < h) | ((hj == h) & ((lj < l) | ((lj == l) & (j < i))))
            r += np.int64(less)
        ranks[i] = r


@njit(inline="always")
def _place_w(a, lo, n, scratch, ranks, W):
    # W is a literal at each call site
    for i in range(n):
        r = ranks[i]
        for w in range(W):
            scratch[r, w] = a[lo + i, w]
    for i in range(n):
        for w in range(W):
            a[lo + i, w] = scratch[i, w]


@njit(inline="always")
def _place(a, lo, n, scratch, ranks):
    W = a.shape[1]
    if W == 1:
        _place_w(a, lo, n, scratch, ranks, 1)
    elif W == 2:
        _place_w(a, lo, n, scratch, ranks, 2)
    elif W == 3:
        _place_w(a, lo, n, scratch, ranks, 3)
    elif W == 4:
        _place_w(a, lo, n, scratch, ranks, 4)
    else:
        for i in range(n):
            copy_rec(scratch, ranks[i], a, lo + i)
        for i in range(n):
            copy_rec(a, lo + i, scratch, i)


@njit(inline="always")
def _enum_sort(a, lo, n, kw, msb_only, ws):
    """Rank every element by branchless comparison counting, then place it once."""
    keys = ws.keys
    ranks = ws.ranks
    ws.stats[ST_ES_PLACEMENTS] += n
    if (kw == 1 or msb_only) and n <= 8:
        if n == 2:
            _ranks_fixed(a, lo, ranks, 2)
        elif n == 3:
            _ranks_fixed(a, lo, ranks, 3)
        elif n == 4:
            _ranks_fixed(a, lo, ranks, 4)
        elif n == 5:
            _ranks_fixed(a, lo, ranks, 5)
        elif n == 6:
            _ranks_fixed(a, lo, ranks, 6)
        elif n == 7:
            _ranks_fixed(a, lo, ranks, 7)
        elif n == 8:
            _ranks_fixed(a, lo, ranks, 8)
        else:
            return
    elif kw == 1 or msb_only:
        for i in range(n):
            keys[0, i] = a[lo + i, 0]
        if n <= 64:
            width = (n + 7) & ~7
            for i in range(n, width):
                keys[0, i] = _U64_MAX
            if width == 16:
                _ranks_w1(keys, ranks, n, 16)
            elif width == 24:
                _ranks_w1(keys, ranks, n, 24)
            elif width == 32:
                _ranks_w1(keys, ranks, n, 32)
            elif width == 40:
                _ranks_w1(keys, ranks, n, 40)
            elif width == 48:
                _ranks_w1(keys, ranks, n, 48)
            elif width == 56:
                _ranks_w1(keys, ranks, n, 56)
            else:
                _ranks_w1(keys, ranks, n, 64)
        else:
            _ranks_w1(keys, ranks, n, n)
    else:
        for i in range(n):
            keys[0, i] = a[lo + i, 0]
            keys[1, i] = a[lo + i, 1]
        _ranks_w2(keys, ranks, n)
    _place(a, lo, n, ws.scratch, ranks)


# ---------------------------------------------------------------------------
# heapsort guard and BlockQuicksort

@njit(inline="always")
def _sift_down(a, base, root, n, kw):
    while True:
        child = 2 * root + 1
        if child >= n:
            return
        if child + 1 < n and rec_lt(a, base + child, base + child + 1, kw):
            child += 1
        if not rec_lt(a, base + root, base + child, kw):
            return
        swap_rec(a, base + root, base + child)
        root = child


@njit(inline="always")
def _heapsort(a, lo, hi, kw):
    n = hi - lo
    for root in range(n // 2 - 1, -1, -1):
        _sift_down(a, lo, root, n, kw)
    for end in range(n - 1, 0, -1):
        swap_rec(a, lo, lo + end)
        _sift_down(a, lo, 0, end, kw)


@njit(inline="always")
def _block_partition(a, lo, hi, kw, block, offs):
    """BlockQuicksort partition of ``[lo, hi)``; returns the pivot's final index.

    Misplaced elements are found by branch-free scans that only record
    offsets, then swapped pairwise.  The pivot is the median of first,
    middle and last, parked at the end while partitioning.
    """
    mid = lo + (hi - lo) // 2
    last = hi - 1
    if rec_lt(a, mid, lo, kw):
        swap_rec(a, lo, mid)
    if rec_lt(a, last, mid, kw):
        swap_rec(a, mid, last)
        if rec_lt(a, mid, lo, kw):
            swap_rec(a, lo, mid)
    swap_rec(a, mid, last)
    pivot = last
    p0 = a[pivot, 0]
    p1 = a[pivot, 1] if kw == 2 else np.uint64(0)

    l = lo
    r = last - 1
    num_l = 0
    num_r = 0
    start_l = 0
    start_r = 0
    while r - l + 1 > 2 * block:
        if num_l == 0:
            start_l = 0
            for j in range(block):
                offs[0, num_l] = j
                num_l += np.int64(not rec_lt_key(a, l + j, p0, p1, kw))
        if num_r == 0:
            start_r = 0
            for j in range(block):
                offs[1, num_r] = j
                num_r += np.int64(not key_lt_rec(p0, p1, a, r - j, kw))
        num = min(num_l, num_r)
        for k in range(num):
            swap_rec(a, l + offs[0, start_l + k], r - offs[1, start_r + k])
        num_l -= num
        num_r -= num
        start_l += num
        start_r += num
        if num_l == 0:
            l += block
        if num_r == 0:
            r -= block

    # last round: shrink the block(s) to whatever is left
    if num_l == 0 and num_r == 0:
        shift_l = (r - l + 1) // 2
        shift_r = (r - l + 1) - shift_l
        start_l = 0
        start_r = 0
        for j in range(shift_l):
            offs[0, num_l] = j
            num_l += np.int64(not rec_lt_key(a, l + j, p0, p1, kw))
            offs[1, num_r] = j
            num_r += np.int64(not key_lt_rec(p0, p1, a, r - j, kw))
        if shift_l < shift_r:
            offs[1, num_r] = shift_r - 1
            num_r += np.int64(not key_lt_rec(p0, p1, a, r - shift_r + 1, kw))
    elif num_r != 0:
        shift_l = (r - l) - block + 1
        shift_r = block
        start_l = 0
        for j in range(shift_l):
            offs[0, num_l] = j
            num_l += np.int64(not rec_lt_key(a, l + j, p0, p1, kw))
    else:
        shift_l = block
        shift_r = (r - l) - block + 1
        start_r = 0
        for j in range(shift_r):
            offs[1, num_r] = j
            num_r += np.int64(not key_lt_rec(p0, p1, a, r - j, kw))
    num = min(num_l, num_r)
    for k in range(num):
        swap_rec(a, l + offs[0, start_l + k], r - offs[1, start_r + k])
    num_l -= num
    num_r -= num
    start_l += num
    start_r += num
    if num_l == 0:
        l += shift_l
    if num_r == 0:
        r -= shift_r

    # one side may still hold offsets: move those elements to the boundary
    if num_l != 0:
        k = start_l + num_l - 1
        upper = r - l
        while k >= start_l and offs[0, k] == upper:
            upper -= 1
            k -= 1
        while k >= start_l:
            swap_rec(a, l + upper, l + offs[0, k])
            upper -= 1
            k -= 1
        swap_rec(a, pivot, l + upper + 1)
        return l + upper + 1
    if num_r != 0:
        k = start_r + num_r - 1
        upper = r - l
        while k >= start_r and offs[1, k] == upper:
            upper -= 1
            k -= 1
        while k >= start_r:
            swap_rec(a, r - upper, r - offs[1, k])
            upper -= 1
            k -= 1
        swap_rec(a, pivot, r - upper)
        return r - upper
    swap_rec(a, pivot, l)
    return l


@njit(inline="always")
def _leaf_sort(a, lo, n, kw, leaf, net, ws):
    # every sorter appears once here, so each compiled entry point holds one copy
    if n < 2:
        return
    if leaf == 3:
        _network_sort(a, lo, n, kw, net, ws.stats)
    elif leaf == 1:
        _shell(a, lo, lo + n, kw, ws.tmp)
    else:
        if leaf == 2 or leaf == 4:
            # ES+IS ranks on the leading key word only, insertion sort settles ties
            _enum_sort(a, lo, n, kw, leaf == 4, ws)
        if leaf == 0 or (leaf == 4 and kw == 2):
            _insertion(a, lo, lo + n, kw, ws.tmp, ws.stats)


@njit(inline="always")
def _sort_driver(a, lo, hi, kw, leaf, leaf_ceiling, block, budget, net, ws):
    """BlockQuicksort loop; ranges of at most ``leaf_ceiling`` go to the leaf sorter."""
    stack = ws.stack
    stats = ws.stats
    top_budget = budget
    sp = 0
    l = lo
    h = hi
    b = budget
    while True:
        n = h - l
        if n <= leaf_ceiling or b <= 0:
            if n <= leaf_ceiling:
                _leaf_sort(a, l, n, kw, leaf, net, ws)
            else:
                _heapsort(a, l, h, kw)
                stats[ST_HEAPSORTS] += 1
            if sp == 0:
                break
            sp -= 1
            l = stack[sp, 0]
            h = stack[sp, 1]
            b = stack[sp, 2]
            continue
        b -= 1
        level = top_budget - b
        if level > stats[ST_BQS_MAX_LEVEL]:
            stats[ST_BQS_MAX_LEVEL] = level
        p = _block_partition(a, l, h, kw, block, ws.offs)
        # continue with the smaller side, keep the larger on the stack
        if p - l < h - p - 1:
            stack[sp, 0] = p + 1
            stack[sp, 1] = h
            stack[sp, 2] = b
            h = p
        else:
            stack[sp, 0] = l
            stack[sp, 1] = p
            stack[sp, 2] = b
            l = p + 1
        sp += 1


@njit(inline="always")
def _depth_budget(n):
    lg = 0
    while (np.int64(1) << (lg + 1)) <= n:
        lg += 1
    return 2 * lg + 1


@njit(inline="always")
def run_algo(algo, a, lo, n, kw, leaf_ceiling, block, budget, net, ws):
    """Run one sorter by code on ``[lo, lo + n)``."""
    if algo < 5:
        leaf = algo
        ceiling = n
    else:
        # partitioning variants: 5 -> IS leaves, 6 -> SN, 7 -> ES, 8 -> ES+IS
        leaf = 0 if algo == 5 else (3 if algo == 6 else (2 if algo == 7 else 4))
        ceiling = leaf_ceiling
    _sort_driver(a, lo, lo + n, kw, leaf, ceiling, block, budget, net, ws)


@njit(inline="always")
def select_code(seg_max, seg_algo, n):
    s = 0
    while seg_max[s] >= 0 and n > seg_max[s]:
        s += 1
    return seg_algo[s]


@njit(**KERNEL)
def tiny_kernel(a, segs, nsegs, algo, kw, leaf_ceiling, block, budget, plan, net, ws):
    """Sort the row ranges ``segs[i] = (lo, n)`` for ``i < nsegs``.

    ``algo < 0`` selects the hybrid through ``plan``; ``budget < 0`` uses the
    default depth budget.  This is the only entry point holding the sorters,
    so they are compiled once; callers with many ranges pass them together
    to avoid per-call argument marshalling.
    """
    for i in range(nsegs):
        lo = segs[i, 0]
        n = segs[i, 1]
        code = algo
        ceiling = leaf_ceiling
        if algo < 0:
            ws.stats[ST_HYBRID_CALLS] += 1
            code = select_code(plan.seg_max, plan.seg_algo, n)
            ceiling = plan.leaf_ceiling
        bud = budget if budget >= 0 else _depth_budget(n)
        run_algo(code, a, lo, n, kw, ceiling, block, bud, net, ws)


@njit(**KERNEL)
def network_kernel(a, lo, ci, cj, kw, stats):
    _run_network(a, lo, ci, cj, 0, ci.shape[0], kw, stats)


_NO_PLAN = TinyPlan(np.array([-1], np.int64), np.array([0], np.int64), BQS_IS_CEILING, BQS_BLOCK)


def _segments(lo: int, n: int, arrays: int = 1) -> np.ndarray:
    segs = np.empty((arrays, 2), np.int64)
    segs[:, 0] = lo + n * np.arange(arrays)
    segs[:, 1] = n
    return segs


def batch_sort(a: np.ndarray, n: int, algo: int, kw: int, plan: TinyPlan, ws: Workspace,
               segs: np.ndarray | None = None):
    """Sort every consecutive run of ``n`` rows of ``a`` (``algo < 0``: the hybrid of ``plan``)."""
    if segs is None:
        segs = _segments(0, n, a.shape[0] // n)
    tiny_kernel(a, segs, segs.shape[0], algo, kw, plan.leaf_ceiling, plan.block, -1, plan,
                NET_TABLE, ws)


def _run(algo: Algo, a, lo, n, kw, ws, leaf_ceiling=BQS_IS_CEILING, block=BQS_BLOCK, budget=-1):
    tiny_kernel(a, _segments(lo, n), 1, int(algo), kw, leaf_ceiling, block, budget, _NO_PLAN,
                NET_TABLE, ws)


# ---------------------------------------------------------------------------
# Python entry points

def _span(records: RecordArray, lo: int, hi: int | None) -> tuple[np.ndarray, int, int]:
    hi = records.count if hi is None else hi
    if not 0 <= lo <= hi <= records.count:
        raise IndexError(f"range [{lo}, {hi}) outside array of {records.count}")
    return records.data, lo, hi


def _workspace_for(records: RecordArray, ws: Workspace | None, need_rows: int = 0) -> Workspace:
    if ws is None:
        return make_workspace(records.layout.words, rows=max(WORKSPACE_ROWS, need_rows))
    return ws


def insertion_sort(records: RecordArray, lo: int = 0, hi: int | None = None, ws=None):
    a, lo, hi = _span(records, lo, hi)
    ws = _workspace_for(records, ws)
    _run(Algo.IS, a, lo, hi - lo, records.layout.key_words, ws)


def shell_sort(records: RecordArray, lo: int = 0, hi: int | None = None, ws=None):
    a, lo, hi = _span(records, lo, hi)
    ws = _workspace_for(records, ws)
    _run(Algo.SHELL, a, lo, hi - lo, records.layout.key_words, ws)


def enumeration_sort(records: RecordArray, lo: int = 0, hi: int | None = None, ws=None):
    """Rank-and-place sort; ties keep their original order."""
    a, lo, hi = _span(records, lo, hi)
    ws = _workspace_for(records, ws, hi - lo)
    if ws.scratch.shape[0] < hi - lo:
        raise ValueError("scratch smaller than the bin")
    _run(Algo.ES, a, lo, hi - lo, records.layout.key_words, ws)


def enum_then_insertion(records: RecordArray, lo: int = 0, hi: int | None = None, ws=None):
    if records.layout.key_bytes != 16:
        raise ValueError("ES+IS is defined for 16 B keys")
    a, lo, hi = _span(records, lo, hi)
    ws = _workspace_for(records, ws, hi - lo)
    if ws.scratch.shape[0] < hi - lo:
        raise ValueError("scratch smaller than the bin")
    _run(Algo.ES_IS, a, lo, hi - lo, 2, ws)


def network_sort(records: RecordArray, net: ComparatorNetwork | None = None, lo: int = 0,
                 hi: int | None = None, ws=None):
    """Run ``net`` (default: the hybrid's network for this length) over the range."""
    a, lo, hi = _span(records, lo, hi)
    n = hi - lo
    net = network_for(n) if net is None else net
    if net.n != n:
        raise ValueError(f"network is for n={net.n}, range holds {n} records")
    ws = _workspace_for(records, ws)
    ci, cj = net.index_arrays()
    network_kernel(a, lo, ci, cj, records.layout.key_words, ws.stats)


def block_quicksort(records: RecordArray, lo: int = 0, hi: int | None = None,
                    tiny: Algo = Algo.SN, depth_budget: int | None = None,
                    block: int = BQS_BLOCK, leaf_ceiling: int | None = None, ws=None):
    """BlockQuicksort with ``tiny`` (IS, SN, ES or ES_IS) handling short partitions."""
    a, lo, hi = _span(records, lo, hi)
    n = hi - lo
    tiny = Algo(tiny)
    if tiny not in (Algo.IS, Algo.SN, Algo.ES, Algo.ES_IS):
        raise ValueError(f"unsupported leaf sorter {tiny.label}")
    if tiny == Algo.ES_IS and records.layout.key_bytes != 16:
        raise ValueError("ES+IS leaves need 16 B keys")
    if leaf_ceiling is None:
        leaf_ceiling = {Algo.IS: BQS_IS_CEILING, Algo.SN: MAX_SN_N,
                        Algo.ES: 24, Algo.ES_IS: 24}[tiny]
    if leaf_ceiling < 1:
        raise ValueError("leaf_ceiling must be >= 1")
    if tiny == Algo.SN and leaf_ceiling > MAX_SN_N:
        raise ValueError(f"network leaves are limited to n <= {MAX_SN_N}")
    if depth_budget is None:
        depth_budget = 2 * max(n, 1).bit_length() - 1
    if depth_budget < 1:
        raise ValueError("depth_budget must be >= 1")
    if ws is None or ws.offs.shape[1] < block:
        ws = make_workspace(records.layout.words, block=block)
    code = {Algo.IS: Algo.BQS, Algo.SN: Algo.BQS_SN, Algo.ES: Algo.BQS_ES, Algo.ES_IS: Algo.BQS_ES_IS}[tiny]
    _run(code, a, lo, n, records.layout.key_words, ws, leaf_ceiling, block, depth_budget)


def select_algorithm(rule: TinyDispatchRule, n: int) -> Algo:
    """The algorithm the hybrid runs for n records (same lookup as the kernel)."""
    plan = rule.plan()
    return Algo(int(select_code(plan.seg_max, plan.seg_algo, n)))


def hybrid_sort(records: RecordArray, rule: TinyDispatchRule | None = None, lo: int = 0,
                hi: int | None = None, ws=None):
    rule = default_rule(records.layout) if rule is None else rule
    if rule.layout != records.layout:
        raise ValueError(f"rule is for layout {rule.layout}, records are {records.layout}")
    a, lo, hi = _span(records, lo, hi)
    ws = _workspace_for(records, ws)
    plan = rule.plan()
    tiny_kernel(a, _segments(lo, hi - lo), 1, -1, records.layout.key_words, plan.leaf_ceiling,
                plan.block, -1, plan, NET_TABLE, ws)
