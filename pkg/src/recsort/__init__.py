"""Parallel most-significant-digit radix sort for fixed-size records."""
import platform as _platform

import llvmlite.binding as _llvm

# LLVM's x86 cmov-conversion pass turns the selects in the compare-exchange
# kernels back into unpredictable branches; keep them branchless.
if _platform.machine().lower() in ("x86_64", "amd64", "i386", "i686"):
    _llvm.set_option("", "-x86-cmov-converter=false")

from .datagen import Distribution, digest, generate, read_records, verify_sorted, write_records  # noqa: E402
from .records import BENCH_LAYOUTS, RecordArray, RecordLayout  # noqa: E402
from .scheduler import SortConfig, classify_bin, sort  # noqa: E402
from .tiny import TinyDispatchRule, default_rule, hybrid_sort  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "BENCH_LAYOUTS", "Distribution", "RecordArray", "RecordLayout", "SortConfig", "TinyDispatchRule",
    "classify_bin", "default_rule", "digest", "generate", "hybrid_sort", "read_records", "sort",
    "verify_sorted", "write_records", "__version__",
]
