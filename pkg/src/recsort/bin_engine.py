"""Per-bin partitioning: histograms, counting and buffered scatter, tiny parents.

Scatters are out of place.  A bin occupies the same row range in the record
array and in the scratch array; each radix pass moves it to the other one
("side" 0 is the caller's array, 1 the scratch).  Final bins that end up in
scratch are copied home.

Buffered scatter stages records in one small buffer per digit.  Each buffer
mirrors a 64 B-aligned window of its destination, so after the first
(partial) flush every flush starts on a cache-line boundary and whole lines
can be written with streaming stores.  Only lines lying entirely inside the
flushed range are streamed; the partial lines at either end, which may be
shared with a neighbouring range, always use ordinary stores.
"""
from __future__ import annotations

import platform
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

from . import tiny
from .records import KERNEL, RADIX, RecordArray, aligned_empty, aligned_zeros, copy_rec

CACHE_LINE = 64
DEFAULT_BUFFER_LINES = 4
STREAMING_SUPPORTED = platform.machine().lower() in ("x86_64", "amd64", "i386", "i686")

# engine stats slots
EN_FINAL = 0          # records settled as Final bins (length <= 1 or keys exhausted)
EN_TINY = 1           # records settled by the hybrid tiny sorter
EN_HYBRID_CALLS = 2
EN_PARENT_CALLS = 3   # tiny-parent passes
EN_PARENT_VISITS = 4  # subbins entered from a tiny parent
EN_SCATTERS = 5       # counting passes inside the engine
N_ENGINE_STATS = 8

_STACK_ROWS = 17 * RADIX
TINY_BATCH = 1024     # tiny bins collected before one call into the tiny sorter

EngineSpace = namedtuple("EngineSpace", "counts active starts cursors stack segs stats")
ScatterBuffers = namedtuple("ScatterBuffers", "bufs fill win first")


def make_engine_space() -> EngineSpace:
    return EngineSpace(
        counts=aligned_zeros(RADIX, np.int64),
        active=aligned_zeros(RADIX, np.int64),
        starts=aligned_zeros(RADIX, np.int64),
        cursors=aligned_zeros(RADIX, np.int64),
        stack=aligned_zeros((_STACK_ROWS, 4), np.int64),
        segs=aligned_zeros((TINY_BATCH, 2), np.int64),
        stats=aligned_zeros(N_ENGINE_STATS, np.int64),
    )


def make_scatter_buffers(lines_per_digit: int = DEFAULT_BUFFER_LINES) -> ScatterBuffers:
    if lines_per_digit < 1:
        raise ValueError("buffer_lines_per_digit must be >= 1")
    words = lines_per_digit * CACHE_LINE // 8
    return ScatterBuffers(
        bufs=aligned_empty((RADIX, words), np.uint64),
        fill=aligned_zeros(RADIX, np.int64),
        win=aligned_zeros(RADIX, np.int64),
        first=aligned_zeros(RADIX, np.int64),
    )


@dataclass(frozen=True)
class BinDescriptor:
    offset: int
    length: int
    depth: int


@dataclass
class Histogram:
    counts: np.ndarray
    active_subbins: list


# ---------------------------------------------------------------------------
# streaming stores

@intrinsic
def _stream_line(typingctx, dst, di, src, si):
    """Copy one 64 B line ``src[si:]`` -> ``dst[di:]`` with a non-temporal store."""
    if not (isinstance(dst, types.Array) and isinstance(src, types.Array) and dst.dtype == src.dtype):
        return None
    sig = types.void(dst, di, src, si)

    def codegen(context, builder, signature, args):
        dst_t, di_t, src_t, si_t = signature.args
        dv, dix, sv, six = args
        da = context.make_array(dst_t)(context, builder, dv)
        sa = context.make_array(src_t)(context, builder, sv)
        elem = context.get_data_type(dst_t.dtype)
        size = context.get_abi_sizeof(elem)
        vec = ir.VectorType(elem, CACHE_LINE // size)
        dix = context.cast(builder, dix, di_t, types.intp)
        six = context.cast(builder, six, si_t, types.intp)
        sp = builder.bitcast(builder.gep(sa.data, [six]), vec.as_pointer())
        dp = builder.bitcast(builder.gep(da.data, [dix]), vec.as_pointer())
        value = builder.load(sp, align=size)
        store = builder.store(value, dp, align=CACHE_LINE)
        store.set_metadata("nontemporal", builder.module.add_metadata([ir.Constant(ir.IntType(32), 1)]))
        return context.get_dummy_value()

    return sig, codegen


@intrinsic
def _store_fence(typingctx):
    """Order streaming stores before later stores (sfence on x86)."""
    sig = types.void()

    def codegen(context, builder, signature, args):
        if STREAMING_SUPPORTED:
            fnty = ir.FunctionType(ir.VoidType(), [])
            fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.x86.sse.sfence")
            builder.call(fn, [])
        else:
            builder.fence("seq_cst")
        return context.get_dummy_value()

    return sig, codegen


@njit(inline="always")
def _flush(dst, di, src, si, length, stream):
    """Copy ``length`` elements; whole aligned lines stream, the ragged ends do not."""
    size = dst.itemsize
    per_line = CACHE_LINE // size
    addr = dst.ctypes.data + di * size
    head = ((CACHE_LINE - (addr & (CACHE_LINE - 1))) & (CACHE_LINE - 1)) // size
    if not stream or head >= length:
        for k in range(length):
            dst[di + k] = src[si + k]
        return 0
    for k in range(head):
        dst[di + k] = src[si + k]
    lines = (length - head) // per_line
    pos = head
    for _ in range(lines):
        _stream_line(dst, di + pos, src, si + pos)
        pos += per_line
    for k in range(pos, length):
        dst[di + k] = src[si + k]
    return lines


@njit(**KERNEL)
def _flush_kernel(dst, di, src, si, length, stream):
    lines = _flush(dst, di, src, si, length, stream)
    if lines:
        _store_fence()
    return lines


def flush_plan(address: int, length: int, itemsize: int = 1) -> tuple[int, int, int]:
    """(head, streamed lines, tail) element counts ``aligned_flush`` uses for a destination."""
    per_line = CACHE_LINE // itemsize
    head = (-address % CACHE_LINE) // itemsize
    if head >= length:
        return length, 0, 0
    lines = (length - head) // per_line
    return head, lines, length - head - lines * per_line


def aligned_flush(dst: np.ndarray, dst_index: int, src: np.ndarray, src_index: int, length: int,
                  stream: bool | None = None) -> int:
    """Copy ``src[src_index:+length]`` to ``dst[dst_index:+length]``; returns lines streamed.

    Writes nothing outside the destination range: the partial first and last
    lines use ordinary stores and only whole 64 B lines use streaming stores.
    """
    if dst.ndim != 1 or src.ndim != 1 or not dst.flags.c_contiguous or not src.flags.c_contiguous:
        raise ValueError("aligned_flush works on contiguous 1-D arrays")
    if dst.dtype != src.dtype:
        raise TypeError("source and destination dtypes differ")
    if CACHE_LINE % dst.itemsize:
        raise TypeError("element size must divide the cache line")
    if length < 0 or dst_index < 0 or src_index < 0:
        raise ValueError("negative index or length")
    if dst_index + length > dst.shape[0] or src_index + length > src.shape[0]:
        raise IndexError("flush range outside the arrays")
    stream = STREAMING_SUPPORTED if stream is None else bool(stream)
    return int(_flush_kernel(dst, dst_index, src, src_index, length, stream))


# ---------------------------------------------------------------------------
# histogram and scatter kernels

@njit(inline="always")
def _histogram(a, lo, hi, depth, counts, active, collect):
    """Digit counts of rows [lo, hi); with ``collect`` also the digits seen at least twice (sorted)."""
    for d in range(RADIX):
        counts[d] = 0
    wi = depth >> 3
    sh = np.uint64(56 - 8 * (depth & 7))
    na = 0
    if collect:
        for r in range(lo, hi):
            d = np.int64((a[r, wi] >> sh) & np.uint64(0xFF))
            c = counts[d] + 1
            counts[d] = c
            if c == 2:
                active[na] = d
                na += 1
        for i in range(1, na):
            v = active[i]
            j = i - 1
            while j >= 0 and active[j] > v:
                active[j + 1] = active[j]
                j -= 1
            active[j + 1] = v
    else:
        for r in range(lo, hi):
            counts[np.int64((a[r, wi] >> sh) & np.uint64(0xFF))] += 1
    return na


@njit(inline="always")
def _prefix(counts, base, starts, cursors):
    s = base
    for d in range(RADIX):
        starts[d] = s
        cursors[d] = s
        s += counts[d]


@njit(inline="always")
def _scatter_w(src, lo, hi, wi, sh, dst, cursors, W):
    for r in range(lo, hi):
        d = np.int64((src[r, wi] >> sh) & np.uint64(0xFF))
        c = cursors[d]
        for w in range(W):
            dst[c, w] = src[r, w]
        cursors[d] = c + 1


@njit(inline="always")
def _counting_scatter(src, lo, hi, depth, dst, cursors):
    """Stable scatter of rows [lo, hi) of src into dst at (and advancing) ``cursors``."""
    wi = depth >> 3
    sh = np.uint64(56 - 8 * (depth & 7))
    W = src.shape[1]
    if W == 1:
        _scatter_w(src, lo, hi, wi, sh, dst, cursors, 1)
    elif W == 2:
        _scatter_w(src, lo, hi, wi, sh, dst, cursors, 2)
    elif W == 3:
        _scatter_w(src, lo, hi, wi, sh, dst, cursors, 3)
    elif W == 4:
        _scatter_w(src, lo, hi, wi, sh, dst, cursors, 4)
    else:
        _scatter_w(src, lo, hi, wi, sh, dst, cursors, 5)


@njit(inline="always")
def _buffered_w(src, lo, hi, wi, sh, dst, bufs, fill, win, first, stream, W):
    cap = bufs.shape[1]
    for r in range(lo, hi):
        d = np.int64((src[r, wi] >> sh) & np.uint64(0xFF))
        f = fill[d]
        if f + W <= cap:
            for w in range(W):
                bufs[d, f + w] = src[r, w]
            f += W
            if f == cap:
                s0 = first[d]
                _flush(dst, win[d] + s0, bufs[d], s0, cap - s0, stream)
                win[d] += cap
                first[d] = 0
                f = 0
        else:
            # the record straddles the end of the window
            for w in range(W):
                bufs[d, f] = src[r, w]
                f += 1
                if f == cap:
                    s0 = first[d]
                    _flush(dst, win[d] + s0, bufs[d], s0, cap - s0, stream)
                    win[d] += cap
                    first[d] = 0
                    f = 0
        fill[d] = f


@njit(inline="always")
def _buffered_scatter(src, lo, hi, depth, dst, cursors, bufs, fill, win, first, stream):
    """Scatter rows [lo, hi) of src through the staging buffers into ``dst`` (flat words).

    ``cursors[d]`` is the destination row of the first digit-d record.
    Produces exactly the stable permutation of the counting scatter.
    """
    W = src.shape[1]
    misalign = (dst.ctypes.data & (CACHE_LINE - 1)) >> 3
    for d in range(RADIX):
        p = cursors[d] * W
        m = (misalign + p) & 7
        win[d] = p - m
        first[d] = m
        fill[d] = m
    wi = depth >> 3
    sh = np.uint64(56 - 8 * (depth & 7))
    if W == 1:
        _buffered_w(src, lo, hi, wi, sh, dst, bufs, fill, win, first, stream, 1)
    elif W == 2:
        _buffered_w(src, lo, hi, wi, sh, dst, bufs, fill, win, first, stream, 2)
    elif W == 3:
        _buffered_w(src, lo, hi, wi, sh, dst, bufs, fill, win, first, stream, 3)
    elif W == 4:
        _buffered_w(src, lo, hi, wi, sh, dst, bufs, fill, win, first, stream, 4)
    else:
        _buffered_w(src, lo, hi, wi, sh, dst, bufs, fill, win, first, stream, 5)
    for d in range(RADIX):
        s0 = first[d]
        if fill[d] > s0:
            _flush(dst, win[d] + s0, bufs[d], s0, fill[d] - s0, stream)
    if stream:
        _store_fence()


@njit(**KERNEL)
def histogram_kernel(a, lo, hi, depth, counts, active, collect):
    return _histogram(a, lo, hi, depth, counts, active, collect)


@njit(**KERNEL)
def counting_scatter_kernel(src, lo, hi, depth, dst, cursors):
    _counting_scatter(src, lo, hi, depth, dst, cursors)


@njit(**KERNEL)
def buffered_scatter_kernel(src, lo, hi, depth, dst_flat, cursors, sb, stream):
    _buffered_scatter(src, lo, hi, depth, dst_flat, cursors, sb.bufs, sb.fill, sb.win, sb.first, stream)


@njit(**KERNEL)
def copy_rows_kernel(dst, src, lo, hi):
    for r in range(lo, hi):
        copy_rec(dst, r, src, r)


# ---------------------------------------------------------------------------
# completing cache-resident bins

@njit(inline="always")
def _copy_home(A, S, lo, n):
    for r in range(lo, lo + n):
        copy_rec(A, r, S, r)


@njit(inline="always")
def _complete(A, S, lo, n, depth, side, key_bytes, tiny_ceiling, parent_max, plan, net, ws, es):
    """Finish one bin whose records all fit the cache, depth first with an explicit stack.

    Tiny bins go to the hybrid sorter, tiny parents (<= parent_max records) are
    split by a counting pass through the thread's small scratch and only their
    subbins with two or more records are revisited; larger bins take a
    counting pass into the other side.
    """
    stack = es.stack
    stats = es.stats
    counts = es.counts
    active = es.active
    starts = es.starts
    cursors = es.cursors
    kw = 2 if key_bytes == 16 else 1
    segs = es.segs
    nseg = 0
    # typed (not literal) constant, so the call shares the sorter compiled for Python callers
    hybrid = np.int64(-1)
    sp = 0
    stack[0, 0] = lo
    stack[0, 1] = n
    stack[0, 2] = depth
    stack[0, 3] = side
    sp = 1
    while sp > 0:
        sp -= 1
        b_lo = stack[sp, 0]
        b_n = stack[sp, 1]
        b_depth = stack[sp, 2]
        b_side = stack[sp, 3]
        if b_n <= 1 or b_depth >= key_bytes:
            if b_side == 1:
                _copy_home(A, S, b_lo, b_n)
            stats[EN_FINAL] += b_n
            continue
        if b_n <= parent_max:
            if b_side == 1:
                _copy_home(A, S, b_lo, b_n)
            if b_n <= tiny_ceiling:
                # tiny bins are settled in place and independent, so they are batched
                segs[nseg, 0] = b_lo
                segs[nseg, 1] = b_n
                nseg += 1
                if nseg == segs.shape[0]:
                    tiny.tiny_kernel(A, segs, nseg, hybrid, kw, plan.leaf_ceiling, plan.block, hybrid,
                                     plan, net, ws)
                    nseg = 0
                stats[EN_TINY] += b_n
                stats[EN_HYBRID_CALLS] += 1
                continue
            # tiny parent: split through the thread-local scratch, in place
            na = _histogram(A, b_lo, b_lo + b_n, b_depth, counts, active, True)
            _prefix(counts, 0, starts, cursors)
            _counting_scatter(A, b_lo, b_lo + b_n, b_depth, ws.scratch, cursors)
            for r in range(b_n):
                copy_rec(A, b_lo + r, ws.scratch, r)
            stats[EN_PARENT_CALLS] += 1
            stats[EN_PARENT_VISITS] += na
            settled = b_n
            for k in range(na - 1, -1, -1):
                d = active[k]
                settled -= counts[d]
                stack[sp, 0] = b_lo + starts[d]
                stack[sp, 1] = counts[d]
                stack[sp, 2] = b_depth + 1
                stack[sp, 3] = 0
                sp += 1
            stats[EN_FINAL] += settled
            continue
        # counting pass into the other side
        src = A if b_side == 0 else S
        dst = S if b_side == 0 else A
        _histogram(src, b_lo, b_lo + b_n, b_depth, counts, active, False)
        d0 = (src[b_lo, b_depth >> 3] >> np.uint64(56 - 8 * (b_depth & 7))) & np.uint64(0xFF)
        if counts[np.int64(d0)] == b_n:
            # one shared digit: the scatter would be a plain copy, go straight deeper
            stack[sp, 0] = b_lo
            stack[sp, 1] = b_n
            stack[sp, 2] = b_depth + 1
            stack[sp, 3] = b_side
            sp += 1
            continue
        _prefix(counts, b_lo, starts, cursors)
        _counting_scatter(src, b_lo, b_lo + b_n, b_depth, dst, cursors)
        stats[EN_SCATTERS] += 1
        for d in range(RADIX - 1, -1, -1):
            c = counts[d]
            if c == 0:
                continue
            if c == 1 and b_side == 0:
                # single record now sits in scratch
                copy_rec(A, starts[d], S, starts[d])
                stats[EN_FINAL] += 1
            elif c == 1:
                stats[EN_FINAL] += 1
            else:
                stack[sp, 0] = starts[d]
                stack[sp, 1] = c
                stack[sp, 2] = b_depth + 1
                stack[sp, 3] = 1 - b_side
                sp += 1
    if nseg:
        tiny.tiny_kernel(A, segs, nseg, hybrid, kw, plan.leaf_ceiling, plan.block, hybrid,
                         plan, net, ws)


@njit(**KERNEL)
def complete_bins_kernel(A, S, bins, key_bytes, tiny_ceiling, parent_max, plan, net, ws, es):
    """Run ``_complete`` over rows of ``bins`` = (offset, length, depth, side)."""
    for i in range(bins.shape[0]):
        _complete(A, S, bins[i, 0], bins[i, 1], bins[i, 2], bins[i, 3], key_bytes,
                  tiny_ceiling, parent_max, plan, net, ws, es)


# ---------------------------------------------------------------------------
# Python entry points on a single bin

def _range(records: RecordArray, lo: int, hi: int | None) -> tuple[int, int]:
    hi = records.count if hi is None else hi
    if not 0 <= lo <= hi <= records.count:
        raise IndexError(f"range [{lo}, {hi}) outside array of {records.count}")
    return lo, hi


def _check_depth(records: RecordArray, depth: int):
    if not 0 <= depth < records.layout.key_bytes:
        raise ValueError(f"depth {depth} outside key of {records.layout.key_bytes} bytes")


def build_histogram(records: RecordArray, depth: int, collect_subbins: bool = False,
                    lo: int = 0, hi: int | None = None) -> Histogram:
    _check_depth(records, depth)
    lo, hi = _range(records, lo, hi)
    counts = np.zeros(RADIX, np.int64)
    active = np.zeros(RADIX, np.int64)
    na = histogram_kernel(records.data, lo, hi, depth, counts, active, collect_subbins)
    return Histogram(counts, [int(d) for d in active[:na]] if collect_subbins else [])


def _descriptors(counts: np.ndarray, base: int, depth: int) -> list[BinDescriptor]:
    out, s = [], base
    for d in range(RADIX):
        c = int(counts[d])
        if c:
            out.append(BinDescriptor(s, c, depth + 1))
        s += c
    return out


def _scratch_for(records: RecordArray, scratch, rows: int) -> np.ndarray:
    if scratch is None:
        return aligned_empty((rows, records.layout.words))
    data = scratch.data if isinstance(scratch, RecordArray) else scratch
    if data.ndim != 2 or data.shape[1] != records.layout.words or data.dtype != np.uint64:
        raise ValueError("scratch must be a uint64 record buffer of the same layout")
    if data.shape[0] < rows:
        raise ValueError("scratch smaller than the bin")
    return data


def counting_scatter(records: RecordArray, depth: int, lo: int = 0, hi: int | None = None,
                     scratch=None) -> list[BinDescriptor]:
    """Group the bin by the digit at ``depth`` via prefix sums; returns nonempty subbins."""
    _check_depth(records, depth)
    lo, hi = _range(records, lo, hi)
    n = hi - lo
    tmp = _scratch_for(records, scratch, n)
    counts = np.zeros(RADIX, np.int64)
    histogram_kernel(records.data, lo, hi, depth, counts, counts, False)
    cursors = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    counting_scatter_kernel(records.data, lo, hi, depth, tmp, cursors)
    records.data[lo:hi] = tmp[:n]
    return _descriptors(counts, lo, depth)


def buffered_scatter(records: RecordArray, depth: int, lo: int = 0, hi: int | None = None,
                     scratch=None, scratch_offset: int = 0, buffers: ScatterBuffers | None = None,
                     stream: bool | None = None) -> list[BinDescriptor]:
    """Same grouping as :func:`counting_scatter`, staged through per-digit buffers.

    Records land in ``scratch`` rows ``scratch_offset ..`` (so the destination
    alignment can be varied) and are then copied back into the bin.
    """
    _check_depth(records, depth)
    lo, hi = _range(records, lo, hi)
    n = hi - lo
    tmp = _scratch_for(records, scratch, scratch_offset + n)
    sb = buffers if buffers is not None else make_scatter_buffers()
    stream = STREAMING_SUPPORTED if stream is None else bool(stream)
    counts = np.zeros(RADIX, np.int64)
    histogram_kernel(records.data, lo, hi, depth, counts, counts, False)
    cursors = scratch_offset + np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    buffered_scatter_kernel(records.data, lo, hi, depth, tmp.reshape(-1), cursors, sb, stream)
    records.data[lo:hi] = tmp[scratch_offset:scratch_offset + n]
    return _descriptors(counts, lo, depth)


def partition_tiny_parent(records: RecordArray, depth: int, lo: int = 0, hi: int | None = None,
                          rule: tiny.TinyDispatchRule | None = None, ws: tiny.Workspace | None = None,
                          parent_max: int = 256) -> np.ndarray:
    """Sort a bin of at most ``parent_max`` records from ``depth`` on; returns engine stats."""
    _check_depth(records, depth)
    lo, hi = _range(records, lo, hi)
    n = hi - lo
    if n > parent_max:
        raise ValueError(f"tiny parents hold at most {parent_max} records, got {n}")
    layout = records.layout
    rule = tiny.default_rule(layout) if rule is None else rule
    ws = tiny.make_workspace(layout.words, rows=max(parent_max, tiny.WORKSPACE_ROWS)) if ws is None else ws
    es = make_engine_space()
    ceiling = min(rule.ceiling, parent_max)
    # a zero-row scratch: tiny parents never leave the caller's array
    empty = np.empty((0, layout.words), np.uint64)
    bins = np.array([[lo, n, depth, 0]], np.int64)
    complete_bins_kernel(records.data, empty, bins, layout.key_bytes, ceiling, max(parent_max, 1),
                         rule.plan(), tiny.NET_TABLE, ws, es)
    return es.stats.copy()
