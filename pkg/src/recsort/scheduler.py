"""Three-phase orchestration of the full sort.

Phase 1 splits the whole array into one static chunk per thread; every
thread histograms its chunk, the histograms are combined into per-thread
destination cursors and the threads scatter their chunks in parallel with
the buffered scatter.  Bins that are still a large share of the array
(Huge) go through the same parallel pass again.  All other bins enter a
largest-first queue served by worker threads: big ones get another
buffered pass, cache-resident ones are finished in one engine call
(counting passes, tiny parents and the hybrid tiny sorter).

Only whole cache lines strictly inside a thread's own destination range
are written with streaming stores, so bins or chunks that share a boundary
line never race through non-temporal writes.
"""
from __future__ import annotations

import enum
import glob
import heapq
import math
import os
import threading
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import psutil

from . import bin_engine as be
from . import tiny
from .records import RADIX, RecordArray, RecordLayout, aligned_empty, aligned_zeros

DEFAULT_L2_BYTES = 256 * 1024
THREADS_ENV = "RADIX_SORT_THREADS"
MIN_CHUNK = 1 << 14         # records per thread below which a parallel pass uses fewer threads


class BinClass(enum.Enum):
    HUGE = "Huge"
    SMALL_BUFFERED = "SmallBuffered"
    SMALL_COUNTING = "SmallCounting"
    TINY_PARENT = "TinyParent"
    TINY = "Tiny"
    FINAL = "Final"


def physical_cores() -> int:
    """Physical cores this process may run on."""
    phys = psutil.cpu_count(logical=False) or os.cpu_count() or 1
    try:
        allowed = len(os.sched_getaffinity(0))
    except AttributeError:
        allowed = phys
    return max(1, min(phys, allowed))


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            t = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if t < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return t
    return physical_cores()


def _parse_size(text: str) -> int:
    text = text.strip().upper()
    mult = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30}.get(text[-1:], 1)
    return int(text.rstrip("KMG")) * mult


def detect_l2_bytes() -> int:
    """Per-core L2 size from sysfs; 256 KiB when it cannot be read."""
    for d in sorted(glob.glob("/sys/devices/system/cpu/cpu0/cache/index*")):
        try:
            with open(os.path.join(d, "level")) as f:
                level = f.read().strip()
            with open(os.path.join(d, "type")) as f:
                kind = f.read().strip()
            if level == "2" and kind in ("Unified", "Data"):
                with open(os.path.join(d, "size")) as f:
                    return _parse_size(f.read())
        except (OSError, ValueError):
            continue
    return DEFAULT_L2_BYTES


@dataclass
class SortConfig:
    threads: int | None = None                 # default: $RADIX_SORT_THREADS or physical cores
    l2_bytes: int | None = None                # default: detected, else 256 KiB
    buffer_lines_per_digit: int = be.DEFAULT_BUFFER_LINES
    tiny_parent_max: int = 256
    dispatch_rules: dict = field(default_factory=dict)   # RecordLayout -> TinyDispatchRule
    huge_bin_fraction: Fraction | float | None = None    # default: 1/threads
    streaming: bool | None = None              # default: on where supported

    def resolved(self) -> "SortConfig":
        """Copy with every default filled in and all fields validated."""
        threads = default_threads() if self.threads is None else int(self.threads)
        if threads < 1:
            raise ValueError("threads must be >= 1")
        cfg = replace(
            self,
            threads=threads,
            l2_bytes=detect_l2_bytes() if self.l2_bytes is None else int(self.l2_bytes),
            huge_bin_fraction=(Fraction(1, threads) if self.huge_bin_fraction is None
                               else self.huge_bin_fraction),
            streaming=be.STREAMING_SUPPORTED if self.streaming is None else bool(self.streaming),
            dispatch_rules=dict(self.dispatch_rules),
        )
        if cfg.l2_bytes < 1:
            raise ValueError("l2_bytes must be positive")
        if cfg.buffer_lines_per_digit < 1:
            raise ValueError("buffer_lines_per_digit must be >= 1")
        if cfg.tiny_parent_max < 1:
            raise ValueError("tiny_parent_max must be >= 1")
        if not 0 < cfg.huge_bin_fraction <= 1:
            raise ValueError("huge_bin_fraction must lie in (0, 1]")
        for layout, rule in cfg.dispatch_rules.items():
            if rule.layout != layout:
                raise ValueError(f"dispatch rule for {rule.layout} registered under {layout}")
        return cfg

    def rule_for(self, layout: RecordLayout) -> tiny.TinyDispatchRule:
        rule = self.dispatch_rules.get(layout)
        return tiny.default_rule(layout) if rule is None else rule

    def check_layout(self, layout: RecordLayout):
        ceiling = self.rule_for(layout).ceiling
        if self.tiny_parent_max < ceiling:
            raise ValueError(f"tiny_parent_max {self.tiny_parent_max} below the dispatch ceiling "
                             f"{ceiling} of layout {layout}")


def _classify(length, depth, key_bytes, ceiling, parent_max, small_max, huge_min) -> BinClass:
    if depth >= key_bytes or length <= 1:
        return BinClass.FINAL
    if length <= ceiling:
        return BinClass.TINY
    if length <= parent_max:
        return BinClass.TINY_PARENT
    if length <= small_max:
        return BinClass.SMALL_COUNTING
    if length < huge_min:
        return BinClass.SMALL_BUFFERED
    return BinClass.HUGE


def _thresholds(config: SortConfig, layout: RecordLayout, total: int) -> tuple:
    """(ceiling, tiny_parent_max, SmallCounting max length, Huge min length) for one array."""
    l2 = detect_l2_bytes() if config.l2_bytes is None else config.l2_bytes
    frac = config.huge_bin_fraction
    if frac is None:
        threads = default_threads() if config.threads is None else config.threads
        frac = Fraction(1, threads)
    # Huge means length >= total * fraction
    huge_min = math.ceil(Fraction(total) * Fraction(frac))
    return (config.rule_for(layout).ceiling, config.tiny_parent_max,
            l2 // 2 // layout.record_bytes, huge_min)


def classify_bin(length: int, depth: int, config: SortConfig, layout: RecordLayout,
                 total: int | None = None) -> BinClass:
    """Processing class of a bin; ``total`` is the array size (default: the bin is the whole array)."""
    total = length if total is None else total
    return _classify(length, depth, layout.key_bytes, *_thresholds(config, layout, total))


# ---------------------------------------------------------------------------
# work queue

QueuedBin = namedtuple("QueuedBin", "offset length depth side")


class BinQueue:
    """Pending bins, longest first (ties: lower offset), shared by the workers.

    ``pop`` blocks while the queue is empty but some worker is still busy
    (it may push more bins); it returns None once the queue is empty and
    every worker is idle, or after ``abort``.
    """

    def __init__(self):
        self._heap = []
        self._cv = threading.Condition()
        self._busy = 0
        self._aborted = False
        self.pushed = 0
        self.popped = 0

    def __len__(self):
        with self._cv:
            return len(self._heap)

    def push(self, offset: int, length: int, depth: int, side: int = 0):
        with self._cv:
            heapq.heappush(self._heap, (-length, offset, depth, side))
            self.pushed += 1
            self._cv.notify()

    def pop(self) -> QueuedBin | None:
        batch = self.pop_batch()
        return None if batch is None else batch[0]

    def pop_batch(self, small_max: int = 0, budget: int = 0) -> list[QueuedBin] | None:
        """Pop a longest bin; if it has at most ``small_max`` records, keep popping
        bins while their total stays within ``budget`` records.

        One ``task_done`` call finishes the whole batch.
        """
        with self._cv:
            while not self._heap and self._busy and not self._aborted:
                self._cv.wait()
            if self._aborted or not self._heap:
                return None
            neg, offset, depth, side = heapq.heappop(self._heap)
            batch = [QueuedBin(offset, -neg, depth, side)]
            total = -neg
            if total <= small_max:
                heap = self._heap
                while heap and total - heap[0][0] <= budget:
                    neg, offset, depth, side = heapq.heappop(heap)
                    batch.append(QueuedBin(offset, -neg, depth, side))
                    total -= neg
            self._busy += 1
            self.popped += len(batch)
            return batch

    def task_done(self):
        with self._cv:
            self._busy -= 1
            if not self._busy and not self._heap:
                self._cv.notify_all()

    def abort(self):
        with self._cv:
            self._aborted = True
            self._cv.notify_all()


# ---------------------------------------------------------------------------
# the sort

@dataclass
class SortStats:
    count: int = 0
    threads: int = 1
    parallel_passes: int = 0      # phase-1 style passes (root and Huge bins)
    buffered_passes: int = 0      # single-threaded buffered passes on SmallBuffered bins
    counting_passes: int = 0      # counting passes inside the engine
    bins_pushed: int = 0
    bins_popped: int = 0
    final_records: int = 0
    tiny_records: int = 0
    hybrid_calls: int = 0
    parent_calls: int = 0
    parent_visits: int = 0

    @property
    def settled(self) -> int:
        """Records that ended in a Final or Tiny bin; equals ``count`` after a sort."""
        return self.final_records + self.tiny_records


class _ThreadState:
    def __init__(self, words: int, cfg: SortConfig):
        self.ws = tiny.make_workspace(words, rows=max(cfg.tiny_parent_max, tiny.WORKSPACE_ROWS))
        self.es = be.make_engine_space()
        self.sb = be.make_scatter_buffers(cfg.buffer_lines_per_digit)
        self.counts = aligned_zeros(RADIX, np.int64)
        self.cursors = aligned_zeros(RADIX, np.int64)
        self.final = 0
        self.buffered = 0


class _Sorter:
    def __init__(self, array: RecordArray, cfg: SortConfig, scratch: np.ndarray | None):
        self.cfg = cfg
        self.layout = array.layout
        self.A = array.data
        n = array.count
        if scratch is None:
            scratch = aligned_empty(self.A.shape)
        elif scratch.shape[0] < n or scratch.shape[1:] != self.A.shape[1:] or scratch.dtype != np.uint64:
            raise ValueError("scratch must be a uint64 buffer with at least as many records")
        self.S = scratch[:n]
        self.S_flat = self.S.reshape(-1)
        self.A_flat = self.A.reshape(-1)
        self.count = n
        self.rule = cfg.rule_for(self.layout)
        self.plan = self.rule.plan()
        self.key_bytes = self.layout.key_bytes
        self.limits = _thresholds(cfg, self.layout, n)
        self.ceiling, _, self.small_max, _ = self.limits
        self.states = [_ThreadState(self.layout.words, cfg) for _ in range(cfg.threads)]
        self.queue = BinQueue()
        self.parallel_passes = 0

    def classify(self, length: int, depth: int) -> BinClass:
        return _classify(length, depth, self.key_bytes, *self.limits)

    # -- helpers ------------------------------------------------------------

    def _sides(self, side):
        return (self.A, self.S_flat) if side == 0 else (self.S, self.A_flat)

    def _complete(self, st, lo, n, depth, side):
        self._complete_bins(st, np.array([[lo, n, depth, side]], np.int64))

    def _complete_bins(self, st, bins):
        be.complete_bins_kernel(self.A, self.S, bins, self.key_bytes, self.ceiling,
                                self.cfg.tiny_parent_max, self.plan, tiny.NET_TABLE, st.ws, st.es)

    def _copy_home(self, pool, lo, n):
        if pool is None or n < 2 * MIN_CHUNK:
            be.copy_rows_kernel(self.A, self.S, lo, lo + n)
            return
        T = min(self.cfg.threads, n // MIN_CHUNK)
        b = lo + n * np.arange(T + 1) // T
        list(pool.map(lambda t: be.copy_rows_kernel(self.A, self.S, b[t], b[t + 1]), range(T)))

    # -- phase 1 ------------------------------------------------------------

    def _parallel_pass(self, pool, lo, n, depth, side) -> tuple[np.ndarray, int]:
        """Histogram and buffered scatter of one bin with static chunks per thread.

        Returns the digit counts and the side now holding the bin.
        """
        src, dst = self._sides(side)
        T = max(1, min(self.cfg.threads, n // MIN_CHUNK))
        b = lo + n * np.arange(T + 1, dtype=np.int64) // T
        states = self.states[:T]

        def hist(t):
            st = states[t]
            be.histogram_kernel(src, b[t], b[t + 1], depth, st.counts, st.cursors, False)

        def scatter(t):
            st = states[t]
            be.buffered_scatter_kernel(src, b[t], b[t + 1], depth, dst, st.cursors, st.sb,
                                       self.cfg.streaming)

        self._run(pool, hist, T)
        H = np.stack([st.counts for st in states])            # (T, 256)
        total = H.sum(axis=0)
        if total.max() == n:
            return total, side                                 # one shared digit: nothing moves
        digit_start = lo + np.cumsum(total) - total
        cur = digit_start + np.cumsum(H, axis=0) - H
        for t, st in enumerate(states):
            st.cursors[:] = cur[t]
        self._run(pool, scatter, T)
        self.parallel_passes += 1
        return total, 1 - side

    @staticmethod
    def _run(pool, fn, T):
        if pool is None or T == 1:
            for t in range(T):
                fn(t)
        else:
            list(pool.map(fn, range(T)))

    def _phase1(self, pool):
        st0 = self.states[0]
        frontier = [(0, self.count, 0, 0)]
        while frontier:
            lo, n, depth, side = frontier.pop()
            counts, side1 = self._parallel_pass(pool, lo, n, depth, side)
            s = lo
            for d in range(RADIX):
                c = int(counts[d])
                if not c:
                    continue
                cls = self.classify(c, depth + 1)
                if cls is BinClass.HUGE:
                    frontier.append((s, c, depth + 1, side1))
                elif cls is BinClass.FINAL:
                    if side1 == 1:
                        self._copy_home(pool, s, c)
                    st0.final += c
                else:
                    self.queue.push(s, c, depth + 1, side1)
                s += c

    # -- phases 2 and 3 -----------------------------------------------------

    def _buffered_bin(self, st, lo, n, depth, side):
        src, dst = self._sides(side)
        be.histogram_kernel(src, lo, lo + n, depth, st.counts, st.cursors, False)
        counts = st.counts.copy()
        if counts.max() == n:
            self.queue.push(lo, n, depth + 1, side)
            return
        starts = lo + np.cumsum(counts) - counts
        st.cursors[:] = starts
        be.buffered_scatter_kernel(src, lo, lo + n, depth, dst, st.cursors, st.sb, self.cfg.streaming)
        st.buffered += 1
        depth1, side1 = depth + 1, 1 - side
        if depth1 >= self.key_bytes:
            if side1 == 1:
                be.copy_rows_kernel(self.A, self.S, lo, lo + n)
            st.final += n
            return
        nz = np.flatnonzero(counts)
        c, s = counts[nz], starts[nz]
        big = c > self.small_max
        for off, length in zip(s[big].tolist(), c[big].tolist()):
            self.queue.push(off, length, depth1, side1)
        small = ~big
        if small.any():
            # cache-resident subbins are finished right here by their owner
            bins = np.empty((int(small.sum()), 4), np.int64)
            bins[:, 0] = s[small]
            bins[:, 1] = c[small]
            bins[:, 2] = depth1
            bins[:, 3] = side1
            self._complete_bins(st, bins)

    def _process(self, st, batch: list[QueuedBin]):
        b = batch[0]
        if self.classify(b.length, b.depth) is BinClass.SMALL_BUFFERED:
            self._buffered_bin(st, b.offset, b.length, b.depth, b.side)
        else:
            self._complete_bins(st, np.array(batch, np.int64).reshape(-1, 4))

    def _worker(self, t):
        st = self.states[t]
        q = self.queue
        # cache-resident bins are taken in batches of about 1/8 of a thread's share
        budget = max(self.small_max, self.count // (8 * self.cfg.threads))
        while True:
            batch = q.pop_batch(self.small_max, budget)
            if batch is None:
                return
            try:
                self._process(st, batch)
            except BaseException:
                q.abort()
                raise
            finally:
                q.task_done()

    # -- driver -------------------------------------------------------------

    def run(self) -> SortStats:
        root = self.classify(self.count, 0)
        if root is BinClass.FINAL:
            self.states[0].final += self.count
        elif root is not BinClass.HUGE:
            self._complete(self.states[0], 0, self.count, 0, 0)
        elif self.cfg.threads == 1:
            self._phase1(None)
            self._worker(0)
        else:
            with ThreadPoolExecutor(self.cfg.threads, thread_name_prefix="recsort") as pool:
                self._phase1(pool)
                futures = [pool.submit(self._worker, t) for t in range(self.cfg.threads)]
                for f in futures:
                    f.result()
        return self._stats()

    def _stats(self) -> SortStats:
        es = np.sum([st.es.stats for st in self.states], axis=0)
        return SortStats(
            count=self.count,
            threads=self.cfg.threads,
            parallel_passes=self.parallel_passes,
            buffered_passes=sum(st.buffered for st in self.states),
            counting_passes=int(es[be.EN_SCATTERS]),
            bins_pushed=self.queue.pushed,
            bins_popped=self.queue.popped,
            final_records=int(es[be.EN_FINAL]) + sum(st.final for st in self.states),
            tiny_records=int(es[be.EN_TINY]),
            hybrid_calls=int(es[be.EN_HYBRID_CALLS]),
            parent_calls=int(es[be.EN_PARENT_CALLS]),
            parent_visits=int(es[be.EN_PARENT_VISITS]),
        )


def sort(array: RecordArray, config: SortConfig | None = None,
         scratch: np.ndarray | None = None) -> SortStats:
    """Sort ``array`` in place by key; returns counters describing the run.

    ``scratch`` optionally supplies the out-of-place buffer (at least
    ``array.count`` rows of the same width) so repeated sorts can reuse it.
    """
    cfg = (config or SortConfig()).resolved()
    cfg.check_layout(array.layout)
    if array.count <= 1:
        return SortStats(count=array.count, threads=cfg.threads, final_records=array.count)
    return _Sorter(array, cfg, scratch).run()
