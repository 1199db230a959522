"""``recsort`` command line: gen, sort, tinybench, bench and netgen.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from fractions import Fraction

from . import bench, netgen
from .datagen import (KINDS, Distribution, RecordFileError, digest, generate, read_records,
                      verify_sorted, write_records)
from .records import BENCH_LAYOUTS, RecordLayout
from .scheduler import THREADS_ENV, SortConfig, default_threads, sort

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class VerifyFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# argument types

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _count(text):
    try:
        v = int(float(text)) if "e" in text.lower() else int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a record count, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("record counts must be non-negative")
    return v


def _fraction(text):
    try:
        v = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a fraction such as 1/4 or 0.25, got {text!r}") from None
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError("fraction must lie in (0, 1]")
    return v


def _layout(text):
    try:
        return RecordLayout.parse(text)
    except (ValueError, TypeError) as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _list(item):
    def parse(text):
        return [item(t) for t in text.split(",") if t.strip()]
    return parse


def _sizes(text):
    """``2-64`` or ``2,4,8``."""
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return out


# ---------------------------------------------------------------------------
# parser

def _add_sort_config(p):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or physical cores)")
    p.add_argument("--l2-kb", type=_positive_int, default=None, help="per-core L2 size in KiB (default: detected)")
    p.add_argument("--buffer-lines", type=_positive_int, default=4, help="cache lines per scatter buffer")
    p.add_argument("--tiny-parent-max", type=_positive_int, default=256)
    p.add_argument("--huge-fraction", type=_fraction, default=None,
                   help="bins above this share of the array get a parallel pass (default: 1/threads)")


def _sort_config(args, threads=None) -> SortConfig:
    return SortConfig(
        threads=threads if threads is not None else getattr(args, "threads", None),
        l2_bytes=None if args.l2_kb is None else args.l2_kb * 1024,
        buffer_lines_per_digit=args.buffer_lines,
        tiny_parent_max=args.tiny_parent_max,
        huge_bin_fraction=args.huge_fraction,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recsort", description="Parallel MSD radix sort for fixed-size records.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic record file")
    g.add_argument("--n", type=_count, required=True)
    g.add_argument("--key-bytes", type=int, default=8)
    g.add_argument("--data-bytes", type=int, default=8)
    g.add_argument("--dist", choices=KINDS, default="uniform")
    g.add_argument("--zipf-theta", type=float, default=1.0)
    g.add_argument("--zipf-universe", type=_positive_int, default=1 << 20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("sort", help="sort a record file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--verify", action="store_true", help="check order and record multiset")
    _add_sort_config(s)

    t = sub.add_parser("tinybench", help="ns/element of the tiny sorters for n in 2..64")
    t.add_argument("--layouts", type=_list(_layout), default=list(BENCH_LAYOUTS))
    t.add_argument("--sizes", type=_sizes, default=list(range(2, 65)))
    t.add_argument("--arrays", type=_positive_int, default=100_000, help="tiny arrays per timed batch")
    t.add_argument("--max-records", type=_positive_int, default=None, help="cap on records per batch")
    t.add_argument("--reps", type=_positive_int, default=5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--algorithms", type=_list(str), default=None, help="subset, e.g. IS,SN,Hybrid")
    t.add_argument("--csv", default=None, help="output path (default: stdout)")

    b = sub.add_parser("bench", help="full-sort throughput, scaling sweep or scatter A/B")
    b.add_argument("--n", type=_list(_count), default=[10_000_000])
    b.add_argument("--layouts", type=_list(_layout), default=[RecordLayout(8, 8)])
    b.add_argument("--dist", type=_list(str), default=["uniform"])
    b.add_argument("--threads-list", type=_list(_positive_int), default=None,
                   help="thread counts (default: 1 and the default thread count)")
    b.add_argument("--reps", type=_positive_int, default=5)
    b.add_argument("--seed", type=int, default=0)
    mode = b.add_mutually_exclusive_group()
    mode.add_argument("--scaling", action="store_true",
                      help="sweep 1..--max-threads threads on the first n/layout/dist")
    mode.add_argument("--scatter-ab", action="store_true",
                      help="time one radix pass with the counting and the buffered scatter")
    b.add_argument("--max-threads", type=_positive_int, default=None, help="scaling sweep top (default: physical cores)")
    b.add_argument("--csv", default=None, help="output path (default: stdout)")
    _add_sort_config(b)

    n = sub.add_parser("netgen", help="print the comparator network used for n inputs")
    n.add_argument("--n", type=int, required=True)
    n.add_argument("--validate", action="store_true",
                   help="check it sorts (exhaustive 0-1 check up to n=24, random permutations above)")
    n.add_argument("--trials", type=_positive_int, default=100_000)
    return parser


# ---------------------------------------------------------------------------
# commands

def _emit_csv(rows, columns, path):
    if path is None:
        bench.write_csv(rows, columns, sys.stdout)
    else:
        bench.write_csv(rows, columns, path)


def cmd_gen(args):
    try:
        layout = RecordLayout(args.key_bytes, args.data_bytes)
        dist = Distribution(args.dist, args.seed, args.zipf_theta, args.zipf_universe)
    except ValueError as e:
        raise UsageError(str(e)) from None
    arr = generate(args.n, layout, dist)
    write_records(args.out, arr, args.seed)


def cmd_sort(args):
    arr, seed = read_records(args.input)
    before = digest(arr) if args.verify else None
    t0 = time.perf_counter()
    sort(arr, _sort_config(args))
    elapsed = time.perf_counter() - t0
    print(f"sorted {arr.count} records ({arr.layout}) in {elapsed:.6f} s", file=sys.stderr)
    if args.verify:
        if not verify_sorted(arr, before):
            raise VerifyFailed("output is not a sorted permutation of the input")
        print("verify: ok", file=sys.stderr)
    write_records(args.out, arr, seed)


def cmd_tinybench(args):
    cfg = bench.TinyBenchConfig(layouts=tuple(args.layouts), sizes=tuple(args.sizes), arrays=args.arrays,
                                max_records=args.max_records, reps=args.reps, seed=args.seed,
                                algorithms=None if args.algorithms is None else tuple(args.algorithms))
    _emit_csv(bench.tinybench(cfg), bench.TINY_COLUMNS, args.csv)


def cmd_bench(args):
    for d in args.dist:
        if d not in KINDS:
            raise UsageError(f"unknown distribution {d!r}; expected one of {KINDS}")
    if args.scatter_ab:
        rows = []
        for n in args.n:
            for d in args.dist:
                rows += bench.scatter_ab(n, tuple(args.layouts), d, args.reps, args.seed, args.buffer_lines)
        _emit_csv(rows, bench.AB_COLUMNS, args.csv)
        return
    if args.scaling:
        rows = bench.scaling_sweep(args.n[0], args.layouts[0], args.dist[0], args.max_threads, args.reps,
                                   args.seed, _sort_config(args))
        _emit_csv(rows, bench.BENCH_COLUMNS, args.csv)
        return
    threads = args.threads_list or sorted({1, args.threads or default_threads()})
    cfg = bench.BenchConfig(sizes=tuple(args.n), layouts=tuple(args.layouts), dists=tuple(args.dist),
                            threads=tuple(threads), reps=args.reps, seed=args.seed,
                            sort_config=_sort_config(args))
    _emit_csv(bench.bench_rows(bench.bench(cfg)), bench.BENCH_COLUMNS, args.csv)


def cmd_netgen(args):
    if not 0 <= args.n <= netgen.MAX_NETWORK_N:
        raise UsageError(f"--n must lie in [0, {netgen.MAX_NETWORK_N}]")
    net = netgen.network_for(args.n)
    print(net.format())
    if args.validate:
        if args.n <= netgen.EXHAUSTIVE_LIMIT:
            ok, how = netgen.is_sorting_network(net), "exhaustive 0-1 check"
        else:
            ok, how = netgen.random_permutation_check(net, args.trials), f"{args.trials} random permutations"
        print(f"n={args.n} comparators={net.size} depth={net.depth}: {'valid' if ok else 'INVALID'} ({how})",
              file=sys.stderr)
        if not ok:
            raise VerifyFailed(f"network for n={args.n} does not sort")


COMMANDS = {"gen": cmd_gen, "sort": cmd_sort, "tinybench": cmd_tinybench, "bench": cmd_bench,
            "netgen": cmd_netgen}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None) is None and os.environ.get(THREADS_ENV):
            default_threads()              # reject a malformed environment value as a usage error
        COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"recsort: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RecordFileError) as e:
        print(f"recsort: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (VerifyFailed, bench.VerificationError) as e:
        print(f"recsort: verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
