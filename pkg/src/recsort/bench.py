"""Benchmark drivers behind ``recsort tinybench`` and ``recsort bench``."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import bin_engine as be
from . import tiny
from .datagen import Distribution, digest, generate, verify_sorted
from .records import BENCH_LAYOUTS, RecordArray, RecordLayout, aligned_empty
from .scheduler import SortConfig, physical_cores, sort
from .tiny import Algo

TINY_COLUMNS = ("algorithm", "layout", "n", "ns_per_element")
BENCH_COLUMNS = ("n", "layout", "dist", "threads", "median_s", "records_per_s", "speedup_vs_1thread")
AB_COLUMNS = ("n", "layout", "dist", "threads", "counting_s", "buffered_s", "ratio")

HYBRID = "Hybrid"
MIN_REPS = 3
KEEP_PRISTINE_BYTES = 1 << 29   # above this the input is regenerated between runs instead of copied
TINY_SINGLE = (Algo.IS, Algo.SHELL, Algo.ES, Algo.SN, Algo.BQS, Algo.ES_IS)


class VerificationError(RuntimeError):
    pass


def tiny_algorithms(layout: RecordLayout) -> list:
    """Algorithms benchmarked for a layout; ES+IS only exists for 16 B keys."""
    algos = [a for a in TINY_SINGLE if a != Algo.ES_IS or layout.key_bytes == 16]
    return algos + [HYBRID]


def algo_label(algo) -> str:
    return HYBRID if algo == HYBRID else Algo(algo).label


def _blocks_sorted(a: np.ndarray, n: int, kw: int) -> bool:
    m = a.shape[0] // n
    keys = a[: m * n, :kw].reshape(m, n, kw)
    hi = keys[..., 0]
    ok = hi[:, 1:] >= hi[:, :-1]
    if kw == 2:
        lo = keys[..., 1]
        ok &= (hi[:, 1:] > hi[:, :-1]) | (lo[:, 1:] >= lo[:, :-1])
    return bool(ok.all())


@dataclass
class BenchResult:
    algorithm: str
    layout: RecordLayout
    n: int
    threads: int
    dist: str
    times_ns: list = field(default_factory=list)   # one wall time per timed repetition
    baseline_s: float | None = None                # single-thread median of the same input

    @property
    def repetitions(self) -> int:
        return len(self.times_ns)

    @property
    def median_s(self) -> float:
        return float(np.median(self.times_ns)) / 1e9

    @property
    def ns_per_record(self) -> float:
        return self.median_s * 1e9 / max(self.n, 1)

    @property
    def records_per_s(self) -> float:
        return self.n / self.median_s if self.median_s > 0 else float("inf")


@dataclass
class TinyBenchConfig:
    layouts: tuple = BENCH_LAYOUTS
    sizes: tuple = tuple(range(2, 65))
    arrays: int = 100_000              # tiny arrays per timed batch
    max_records: int | None = None     # optional cap on records per batch
    reps: int = 5
    seed: int = 0
    algorithms: tuple | None = None    # default: everything applicable

    def __post_init__(self):
        if self.reps < MIN_REPS:
            raise ValueError(f"at least {MIN_REPS} repetitions are needed")
        if self.arrays < 1:
            raise ValueError("arrays must be >= 1")
        if any(n < 2 or n > tiny.MAX_SN_N for n in self.sizes):
            raise ValueError(f"tiny sizes must lie in [2, {tiny.MAX_SN_N}]")


def tinybench(cfg: TinyBenchConfig, progress=None) -> list[dict]:
    """ns/element of every tiny sorter over back-to-back random arrays.

    Each algorithm's warm-up output is checked (every array sorted, record
    multiset intact) before any of its timings are accepted.  Repetitions
    cycle through the algorithms so slow drifts of the machine hit all of
    them alike; the median repetition is reported.
    """
    rows = []
    for layout in cfg.layouts:
        algos = [a for a in tiny_algorithms(layout)
                 if cfg.algorithms is None or algo_label(a) in cfg.algorithms]
        ws = tiny.make_workspace(layout.words)
        rule = tiny.default_rule(layout)
        kw = layout.key_words
        for n in cfg.sizes:
            arrays = cfg.arrays
            if cfg.max_records is not None:
                arrays = max(1, min(arrays, cfg.max_records // n))
            count = arrays * n
            pristine = generate(count, layout, Distribution("uniform", seed=cfg.seed + n)).data
            want = digest(RecordArray(layout, pristine))
            work = np.empty_like(pristine)
            segs = tiny._segments(0, n, arrays)
            plans = {}
            for algo in algos:
                plan = rule.plan() if algo == HYBRID else tiny.single_rule(layout, algo).plan()
                code = -1 if algo == HYBRID else int(algo)
                plans[algo] = (code, plan)
                work[:] = pristine
                tiny.batch_sort(work, n, code, kw, plan, ws, segs)
                if not _blocks_sorted(work, n, kw) or digest(RecordArray(layout, work)) != want:
                    raise VerificationError(f"{algo_label(algo)} failed on layout {layout}, n={n}")
            times = {algo: [] for algo in algos}
            for rep in range(cfg.reps):
                order = algos[rep % len(algos):] + algos[: rep % len(algos)]
                for algo in order:
                    code, plan = plans[algo]
                    work[:] = pristine
                    t0 = time.perf_counter()
                    tiny.batch_sort(work, n, code, kw, plan, ws, segs)
                    times[algo].append(time.perf_counter() - t0)
            for algo in algos:
                ns = float(np.median(times[algo])) / count * 1e9
                rows.append(dict(algorithm=algo_label(algo), layout=str(layout), n=n,
                                 ns_per_element=round(ns, 3)))
            if progress:
                progress(layout, n)
    return rows


def write_csv(rows: list[dict], columns, out):
    """Write rows with a header; ``out`` is a path or a text stream."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as f:
            write_csv(rows, columns, f)
        return
    w = csv.DictWriter(out, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: r[c] for c in columns})


def read_csv(text_or_path) -> list[dict]:
    if isinstance(text_or_path, str) and "\n" in text_or_path:
        return list(csv.DictReader(io.StringIO(text_or_path)))
    with open(text_or_path, newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# full-sort throughput and scaling


@dataclass
class BenchConfig:
    sizes: tuple = (10_000_000,)
    layouts: tuple = (RecordLayout(8, 8),)
    dists: tuple = ("uniform",)
    threads: tuple = (1,)
    reps: int = 5
    seed: int = 0
    sort_config: SortConfig = field(default_factory=SortConfig)

    def __post_init__(self):
        if self.reps < MIN_REPS:
            raise ValueError(f"at least {MIN_REPS} repetitions are needed")
        if any(t < 1 for t in self.threads):
            raise ValueError("thread counts must be >= 1")


class _Input:
    """Benchmark input that can be restored between runs, by copy or by regeneration."""

    def __init__(self, n, layout, dist):
        self.n, self.layout, self.dist = n, layout, dist
        self.work = generate(n, layout, dist)
        self.digest = digest(self.work)
        keep = n * layout.record_bytes <= KEEP_PRISTINE_BYTES
        self.pristine = self.work.data.copy() if keep else None

    def restore(self):
        if self.pristine is not None:
            self.work.data[:] = self.pristine
        else:
            generate(self.n, self.layout, self.dist, out=self.work)


def _timed_sorts(inp: _Input, cfg: SortConfig, reps: int, scratch) -> list:
    """One verified warm-up, then ``reps`` timed sorts, each verified before it counts."""
    times = []
    for rep in range(reps + 1):
        inp.restore()
        t0 = time.perf_counter_ns()
        sort(inp.work, cfg, scratch=scratch)
        dt = time.perf_counter_ns() - t0
        if not verify_sorted(inp.work, inp.digest):
            raise VerificationError(f"sort failed verification: n={inp.n}, layout {inp.layout}, "
                                    f"{inp.dist.kind}, threads={cfg.threads}")
        if rep:
            times.append(dt)
    return times


def bench(cfg: BenchConfig, progress=None) -> list[BenchResult]:
    """Median wall time of full sorts over the (n, layout, dist, threads) grid."""
    threads = tuple(sorted(set(cfg.threads) | {1}))     # one thread is the speedup baseline
    results = []
    for layout in cfg.layouts:
        for n in cfg.sizes:
            scratch = aligned_empty((n, layout.words))
            for kind in cfg.dists:
                inp = _Input(n, layout, Distribution(kind, seed=cfg.seed))
                for t in threads:
                    sc = replace(cfg.sort_config, threads=t)
                    r = BenchResult("recsort", layout, n, t, kind, _timed_sorts(inp, sc, cfg.reps, scratch))
                    results.append(r)
                    if progress:
                        progress(r)
                del inp
    base = {(r.n, r.layout, r.dist): r.median_s for r in results if r.threads == 1}
    for r in results:
        r.baseline_s = base[(r.n, r.layout, r.dist)]
    return [r for r in results if r.threads in cfg.threads]


def bench_rows(results: list[BenchResult]) -> list[dict]:
    base = {(r.n, r.layout, r.dist): r.median_s for r in results if r.threads == 1}
    rows = []
    for r in results:
        t1 = r.baseline_s if r.baseline_s is not None else base.get((r.n, r.layout, r.dist))
        rows.append(dict(n=r.n, layout=str(r.layout), dist=r.dist, threads=r.threads,
                         median_s=round(r.median_s, 6), records_per_s=round(r.records_per_s, 1),
                         speedup_vs_1thread=round(t1 / r.median_s, 4) if t1 else ""))
    return rows


def scaling_sweep(n: int = 100_000_000, layout: RecordLayout = RecordLayout(8, 8), dist: str = "uniform",
                  max_threads: int | None = None, reps: int = 5, seed: int = 0,
                  sort_config: SortConfig | None = None, progress=None) -> list[dict]:
    """Speedup curve for 1 .. ``max_threads`` (default: physical cores) threads."""
    top = physical_cores() if max_threads is None else max_threads
    cfg = BenchConfig(sizes=(n,), layouts=(layout,), dists=(dist,), threads=tuple(range(1, top + 1)),
                      reps=reps, seed=seed, sort_config=sort_config or SortConfig())
    return bench_rows(bench(cfg, progress))


# ---------------------------------------------------------------------------
# counting versus buffered scatter


def scatter_ab(n: int = 10_000_000, layouts=BENCH_LAYOUTS, dist: str = "uniform", reps: int = 5,
               seed: int = 0, buffer_lines: int = be.DEFAULT_BUFFER_LINES,
               stream: bool | None = None) -> list[dict]:
    """Time one whole-array radix pass with each scatter (single thread).

    Both passes read the same input and must leave identical scratch
    contents; ``ratio`` is counting time over buffered time.
    """
    if reps < MIN_REPS:
        raise ValueError(f"at least {MIN_REPS} repetitions are needed")
    stream = be.STREAMING_SUPPORTED if stream is None else stream
    rows = []
    for layout in layouts:
        src = generate(n, layout, Distribution(dist, seed=seed)).data
        out_c = aligned_empty(src.shape)
        out_b = aligned_empty(src.shape)
        counts = np.zeros(be.RADIX, np.int64)
        be.histogram_kernel(src, 0, n, 0, counts, counts, False)
        starts = np.cumsum(counts) - counts
        sb = be.make_scatter_buffers(buffer_lines)
        times = {"counting": [], "buffered": []}
        for rep in range(reps + 1):
            for kind in ("counting", "buffered") if rep % 2 else ("buffered", "counting"):
                cur = starts.copy()
                t0 = time.perf_counter()
                if kind == "counting":
                    be.counting_scatter_kernel(src, 0, n, 0, out_c, cur)
                else:
                    be.buffered_scatter_kernel(src, 0, n, 0, out_b.reshape(-1), cur, sb, stream)
                dt = time.perf_counter() - t0
                if rep:
                    times[kind].append(dt)
            if rep == 0 and not np.array_equal(out_c, out_b):
                raise VerificationError(f"scatters disagree on layout {layout}")
        c, b = float(np.median(times["counting"])), float(np.median(times["buffered"]))
        rows.append(dict(n=n, layout=str(layout), dist=dist, threads=1, counting_s=round(c, 6),
                         buffered_s=round(b, 6), ratio=round(c / b, 4)))
    return rows
