"""Comparator networks: Batcher odd-even merge construction, curated small
networks, layer decomposition and 0-1 principle validation."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

EXHAUSTIVE_LIMIT = 24
MAX_NETWORK_N = 256
# largest n served by the curated table; above it the hybrid runs Batcher
CURATED_MAX = 16


@dataclass(frozen=True)
class Comparator:
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise ValueError(f"comparator needs 0 <= lo < hi, got ({self.lo}, {self.hi})")

    def __iter__(self):
        yield self.lo
        yield self.hi


@dataclass(frozen=True)
class ComparatorNetwork:
    n: int
    comparators: tuple[Comparator, ...]
    layers: tuple[tuple[Comparator, ...], ...] = field(compare=False)

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "ComparatorNetwork":
        """Build from an ordered comparator list; layers are assigned as early as possible.

        The stored comparator order is layer-major, which preserves the
        relative order of every pair of comparators sharing a wire.
        """
        comps = [p if isinstance(p, Comparator) else Comparator(*p) for p in pairs]
        for c in comps:
            if c.hi >= n:
                raise ValueError(f"comparator {tuple(c)} out of range for n={n}")
        ready = [0] * n
        layers: list[list[Comparator]] = []
        for c in comps:
            depth = max(ready[c.lo], ready[c.hi])
            if depth == len(layers):
                layers.append([])
            layers[depth].append(c)
            ready[c.lo] = ready[c.hi] = depth + 1
        frozen = tuple(tuple(layer) for layer in layers)
        flat = tuple(c for layer in frozen for c in layer)
        return cls(n, flat, frozen)

    @property
    def size(self) -> int:
        return len(self.comparators)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def pairs(self) -> list[tuple[int, int]]:
        return [(c.lo, c.hi) for c in self.comparators]

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.fromiter((c.lo for c in self.comparators), dtype=np.int64, count=self.size)
        hi = np.fromiter((c.hi for c in self.comparators), dtype=np.int64, count=self.size)
        return lo, hi

    def apply(self, values) -> list:
        """Run the flat comparator list on a Python sequence (reference semantics)."""
        out = list(values)
        if len(out) != self.n:
            raise ValueError(f"network expects {self.n} values, got {len(out)}")
        for c in self.comparators:
            if out[c.hi] < out[c.lo]:
                out[c.lo], out[c.hi] = out[c.hi], out[c.lo]
        return out

    def apply_layers(self, values) -> list:
        out = list(values)
        for layer in self.layers:
            for c in layer:
                if out[c.hi] < out[c.lo]:
                    out[c.lo], out[c.hi] = out[c.hi], out[c.lo]
        return out

    def format(self) -> str:
        """One ``lo hi`` pair per line, layers separated by blank lines."""
        return "\n\n".join("\n".join(f"{c.lo} {c.hi}" for c in layer) for layer in self.layers)


def batcher_odd_even(n: int) -> ComparatorNetwork:
    """Batcher's odd-even merge network for any n (merge exchange form)."""
    if n < 0 or n > MAX_NETWORK_N:
        raise ValueError(f"n must be in [0, {MAX_NETWORK_N}], got {n}")
    pairs = []
    if n >= 2:
        t = (n - 1).bit_length()
        p = 1 << (t - 1)
        while p > 0:
            q, r, d = 1 << (t - 1), 0, p
            while d > 0:
                for i in range(n - d):
                    if i & p == r:
                        pairs.append((i, i + d))
                d, q, r = q - p, q // 2, p
            p //= 2
    return ComparatorNetwork.from_pairs(n, pairs)


_CURATED = {
    2: (  # 1 comparators, 1 layers
        ((0, 1),),
    ),
    3: (  # 3 comparators, 3 layers
        ((0, 2),),
        ((0, 1),),
        ((1, 2),),
    ),
    4: (  # 5 comparators, 3 layers
        ((0, 1), (2, 3)),
        ((0, 2), (1, 3)),
        ((1, 2),),
    ),
    5: (  # 9 comparators, 5 layers
        ((0, 3), (1, 4)),
        ((0, 2), (1, 3)),
        ((0, 1), (2, 4)),
        ((1, 2), (3, 4)),
        ((2, 3),),
    ),
    6: (  # 12 comparators, 5 layers
        ((0, 5), (1, 3), (2, 4)),
        ((1, 2), (3, 4)),
        ((0, 3), (2, 5)),
        ((0, 1), (2, 3), (4, 5)),
        ((1, 2), (3, 4)),
    ),
    7: (  # 16 comparators, 6 layers
        ((0, 6), (2, 3), (4, 5)),
        ((0, 2), (1, 4), (3, 6)),
        ((0, 1), (2, 5), (3, 4)),
        ((1, 2), (4, 6)),
        ((2, 3), (4, 5)),
        ((1, 2), (3, 4), (5, 6)),
    ),
    8: (  # 19 comparators, 6 layers
        ((0, 2), (1, 3), (4, 6), (5, 7)),
        ((0, 4), (1, 5), (2, 6), (3, 7)),
        ((0, 1), (2, 3), (4, 5), (6, 7)),
        ((2, 4), (3, 5)),
        ((1, 4), (3, 6)),
        ((1, 2), (3, 4), (5, 6)),
    ),
    9: (  # 25 comparators, 7 layers
        ((0, 3), (1, 7), (2, 5), (4, 8)),
        ((0, 7), (2, 4), (3, 8), (5, 6)),
        ((0, 2), (1, 3), (4, 5), (7, 8)),
        ((1, 4), (3, 6), (5, 7)),
        ((0, 1), (2, 4), (3, 5), (6, 8)),
        ((2, 3), (4, 5), (6, 7)),
        ((1, 2), (3, 4), (5, 6)),
    ),
    10: (  # 29 comparators, 8 layers
        ((0, 8), (1, 9), (2, 7), (3, 5), (4, 6)),
        ((0, 2), (1, 4), (5, 8), (7, 9)),
        ((0, 3), (2, 4), (5, 7), (6, 9)),
        ((0, 1), (3, 6), (8, 9)),
        ((1, 5), (2, 3), (4, 8), (6, 7)),
        ((1, 2), (3, 5), (4, 6), (7, 8)),
        ((2, 3), (4, 5), (6, 7)),
        ((3, 4), (5, 6)),
    ),
    11: (  # 35 comparators, 9 layers
        ((0, 8), (1, 7), (2, 6), (4, 10), (5, 9)),
        ((0, 1), (2, 5), (3, 4), (6, 9), (7, 8)),
        ((0, 2), (1, 6), (5, 10)),
        ((0, 3), (1, 2), (4, 6), (5, 7), (9, 10)),
        ((1, 4), (3, 5), (6, 8), (7, 10)),
        ((1, 3), (2, 5), (6, 9), (8, 10)),
        ((2, 3), (4, 5), (6, 7), (8, 9)),
        ((4, 6), (5, 7)),
        ((3, 4), (5, 6), (7, 8)),
    ),
    12: (  # 39 comparators, 9 layers
        ((0, 8), (1, 7), (2, 6), (3, 11), (4, 10), (5, 9)),
        ((0, 1), (2, 5), (3, 4), (6, 9), (7, 8), (10, 11)),
        ((0, 2), (1, 6), (5, 10), (9, 11)),
        ((0, 3), (1, 2), (4, 6), (5, 7), (8, 11), (9, 10)),
        ((1, 4), (3, 5), (6, 8), (7, 10)),
        ((1, 3), (2, 5), (6, 9), (8, 10)),
        ((2, 3), (4, 5), (6, 7), (8, 9)),
        ((4, 6), (5, 7)),
        ((3, 4), (5, 6), (7, 8)),
    ),
    13: (  # 47 comparators, 9 layers
        ((0, 5), (1, 4), (2, 12), (6, 7), (8, 9)),
        ((0, 2), (1, 10), (3, 6), (4, 7), (8, 11), (9, 12)),
        ((0, 8), (1, 3), (2, 11), (5, 9), (6, 10), (7, 12)),
        ((0, 1), (2, 4), (3, 8), (5, 6), (9, 10), (7, 11)),
        ((1, 3), (2, 5), (4, 8), (6, 9), (10, 12)),
        ((1, 2), (3, 5), (4, 11), (6, 8), (7, 9)),
        ((2, 3), (4, 5), (6, 7), (8, 9), (10, 11)),
        ((4, 6), (5, 7), (8, 10), (9, 11)),
        ((3, 4), (5, 6), (7, 8), (9, 10), (11, 12)),
    ),
    14: (  # 52 comparators, 9 layers
        ((0, 5), (1, 4), (2, 12), (3, 13), (6, 7), (8, 9)),
        ((0, 2), (1, 10), (3, 6), (4, 7), (8, 11), (9, 12)),
        ((0, 8), (1, 3), (2, 11), (4, 13), (5, 9), (6, 10), (7, 12)),
        ((0, 1), (2, 4), (3, 8), (5, 6), (9, 10), (11, 13)),
        ((1, 3), (2, 5), (4, 8), (6, 9), (7, 11), (10, 13)),
        ((1, 2), (3, 5), (4, 11), (6, 8), (7, 9), (10, 12)),
        ((2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (12, 13)),
        ((4, 6), (5, 7), (8, 10), (9, 11)),
        ((3, 4), (5, 6), (7, 8), (9, 10), (11, 12)),
    ),
    15: (  # 57 comparators, 9 layers
        ((0, 5), (1, 4), (2, 12), (3, 13), (6, 7), (8, 9), (11, 14)),
        ((0, 2), (1, 10), (3, 6), (4, 7), (5, 14), (8, 11), (9, 12)),
        ((0, 8), (1, 3), (2, 11), (4, 13), (5, 9), (6, 10), (12, 14)),
        ((0, 1), (2, 4), (3, 8), (5, 6), (7, 12), (9, 10), (11, 13)),
        ((1, 3), (2, 5), (4, 8), (6, 9), (7, 11), (10, 13), (12, 14)),
        ((1, 2), (3, 5), (4, 11), (6, 8), (7, 9), (10, 12), (13, 14)),
        ((2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (12, 13)),
        ((4, 6), (5, 7), (8, 10), (9, 11)),
        ((3, 4), (5, 6), (7, 8), (9, 10), (11, 12)),
    ),
    16: (  # 61 comparators, 9 layers
        ((0, 5), (1, 4), (2, 12), (3, 13), (6, 7), (8, 9), (10, 15), (11, 14)),
        ((0, 2), (1, 10), (3, 6), (4, 7), (5, 14), (8, 11), (9, 12), (13, 15)),
        ((0, 8), (1, 3), (2, 11), (4, 13), (5, 9), (6, 10), (7, 15), (12, 14)),
        ((0, 1), (2, 4), (3, 8), (5, 6), (7, 12), (9, 10), (11, 13), (14, 15)),
        ((1, 3), (2, 5), (4, 8), (6, 9), (7, 11), (10, 13), (12, 14)),
        ((1, 2), (3, 5), (4, 11), (6, 8), (7, 9), (10, 12), (13, 14)),
        ((2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (12, 13)),
        ((4, 6), (5, 7), (8, 10), (9, 11)),
        ((3, 4), (5, 6), (7, 8), (9, 10), (11, 12)),
    ),
}


def best_known_network(n: int) -> ComparatorNetwork:
    """Curated network for 2 <= n <= 16; Batcher's construction elsewhere.

    Sizes 2-12 are size-optimal.  The 13-15 entries come from the 16-input
    network by deleting extreme wires and pruning comparators that can no
    longer fire.
    """
    layers = _CURATED.get(n)
    if layers is None:
        return batcher_odd_even(n)
    return ComparatorNetwork.from_pairs(n, [c for layer in layers for c in layer])


@lru_cache(maxsize=None)
def network_for(n: int) -> ComparatorNetwork:
    """The network the tiny sorter executes for n inputs."""
    if n <= CURATED_MAX:
        return best_known_network(n)
    return batcher_odd_even(n)


# ---------------------------------------------------------------------------
# validation

_WIRE_PATTERNS = np.array(
    [0xAAAAAAAAAAAAAAAA, 0xCCCCCCCCCCCCCCCC, 0xF0F0F0F0F0F0F0F0,
     0xFF00FF00FF00FF00, 0xFFFF0000FFFF0000, 0xFFFFFFFF00000000],
    dtype=np.uint64,
)


def _binary_wires(n: int) -> list[np.ndarray]:
    # bit v of wire i is bit i of input vector v; 64 vectors per word
    nwords = max(1, (1 << n) >> 6)
    k = np.arange(nwords, dtype=np.uint64)
    ones = np.uint64(0xFFFFFFFFFFFFFFFF)
    wires = []
    for i in range(n):
        if i < 6:
            wires.append(np.full(nwords, _WIRE_PATTERNS[i]))
        else:
            bit = (k >> np.uint64(i - 6)) & np.uint64(1)
            wires.append(bit * ones)
    return wires


def is_sorting_network(net: ComparatorNetwork, *, trials: int | None = None, seed: int = 0) -> bool:
    """Check the 0-1 principle over all 2^n binary vectors.

    For n above ``EXHAUSTIVE_LIMIT`` pass ``trials`` to test that many random
    permutations instead.
    """
    if net.n <= 1:
        return True
    if trials is not None:
        return random_permutation_check(net, trials, seed=seed)
    if net.n > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"exhaustive check limited to n <= {EXHAUSTIVE_LIMIT}; pass trials= for n={net.n}")
    wires = _binary_wires(net.n)
    for c in net.comparators:
        a, b = wires[c.lo], wires[c.hi]
        wires[c.lo], wires[c.hi] = a & b, a | b
    return all(not np.any(wires[i] & ~wires[i + 1]) for i in range(net.n - 1))


def random_permutation_check(net: ComparatorNetwork, trials: int, *, seed: int = 0,
                             chunk: int = 1 << 16) -> bool:
    """Apply the network to ``trials`` random permutations of 0..n-1."""
    rng = np.random.default_rng(seed)
    n = net.n
    lo, hi = net.index_arrays()
    target = np.arange(n, dtype=np.int32)[:, None]
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        # rows are wires so each comparator touches two contiguous vectors
        x = rng.permuted(np.broadcast_to(target, (n, m)), axis=0).astype(np.int32)
        for i, j in zip(lo, hi):
            a, b = x[i], x[j]
            lo_v = np.minimum(a, b)
            x[j] = np.maximum(a, b)
            x[i] = lo_v
        if not np.array_equal(x, np.broadcast_to(target, (n, m))):
            return False
        done += m
    return True
