import numpy as np
import pytest

from conftest import assert_oracle_sorted, random_records
from recsort import bin_engine
from recsort.bin_engine import (EN_PARENT_VISITS, aligned_flush, buffered_scatter, build_histogram,
                                counting_scatter, flush_plan, make_scatter_buffers, partition_tiny_parent)
from recsort.records import RecordArray, RecordLayout, aligned_empty, digit_at

L80, L88 = RecordLayout(8, 0), RecordLayout(8, 8)


def test_histogram_example():
    arr = RecordArray.from_keys([0x00 << 56, 0xFF << 56, 0x00 << 56, 0x7F << 56], L80)
    h = build_histogram(arr, 0, collect_subbins=True)
    assert h.counts[0x00] == 2 and h.counts[0x7F] == 1 and h.counts[0xFF] == 1
    # only digits holding two or more records still need sorting
    assert h.counts.sum() == 4 and h.active_subbins == [0x00]


def test_histogram_active_subbins_ascending():
    arr = RecordArray.from_keys(np.arange(256, dtype=np.uint64) << np.uint64(56), L80)
    assert build_histogram(arr, 0, collect_subbins=True).active_subbins == []
    arr = RecordArray.from_keys([d << 56 for d in (9, 3, 9, 200, 3, 3, 7)], L80)
    h = build_histogram(arr, 0, collect_subbins=True)
    assert h.active_subbins == [3, 9]
    assert not build_histogram(RecordArray.from_keys([], L80), 0, True).counts.any()


@pytest.mark.parametrize("scatter", [counting_scatter, buffered_scatter])
def test_scatter_example(scatter):
    keys = [0x0200 << 48, 0x0100 << 48, 0x0201 << 48]
    arr = RecordArray.from_keys(keys, L88)
    bins = scatter(arr, 0)
    assert [b.length for b in bins] == [1, 2] and [b.offset for b in bins] == [0, 1]
    assert all(b.depth == 1 for b in bins)
    assert arr.keys() == [0x0100 << 48, 0x0200 << 48, 0x0201 << 48]
    assert list(arr.data[:, 1]) == [1, 0, 2]


def _digit_grouped_stably(out, orig, depth, kb):
    """Oracle: records ordered by digit, original order kept within a digit."""
    keys = orig.keys()
    order = sorted(range(len(keys)), key=lambda i: digit_at(keys[i], depth, kb))
    return np.array_equal(out.data, orig.data[order])


def test_scatters_agree_with_oracle_and_each_other(layout):
    rng = np.random.default_rng(10)
    for _ in range(60):
        n = int(rng.integers(0, 3000))
        depth = int(rng.integers(0, layout.key_bytes))
        offset = int(rng.integers(0, 8))
        base = random_records(rng, n, layout, key_range=int(rng.choice([2, 1000, 2**63])))
        a, b = base.copy(), base.copy()
        scratch = aligned_empty((n + offset, layout.words))
        ba = counting_scatter(a, depth)
        bb = buffered_scatter(b, depth, scratch=scratch, scratch_offset=offset,
                              buffers=make_scatter_buffers(int(rng.integers(1, 5))))
        assert ba == bb
        assert np.array_equal(a.data, b.data)
        assert _digit_grouped_stably(a, base, depth, layout.key_bytes)


def test_scatter_subrange_and_validation():
    rng = np.random.default_rng(11)
    arr = random_records(rng, 100, L88)
    orig = arr.copy()
    bins = counting_scatter(arr, 3, lo=20, hi=70)
    assert np.array_equal(arr.data[:20], orig.data[:20]) and np.array_equal(arr.data[70:], orig.data[70:])
    assert bins[0].offset == 20 and sum(b.length for b in bins) == 50
    with pytest.raises(ValueError):
        counting_scatter(arr, 8)
    with pytest.raises(IndexError):
        buffered_scatter(arr, 0, lo=50, hi=101)
    with pytest.raises(ValueError):
        make_scatter_buffers(0)


def test_flush_plan_examples():
    assert flush_plan(0x1000, 64) == (0, 1, 0)
    assert flush_plan(0x1000, 256) == (0, 4, 0)
    assert flush_plan(0x1008, 48) == (48, 0, 0)
    assert flush_plan(0x1008, 120) == (56, 1, 0)
    assert flush_plan(0x1008, 8, itemsize=8) == (7, 0, 1)


def test_aligned_flush_writes_exactly_the_range():
    rng = np.random.default_rng(12)
    guard = 0xA5
    for stream in (False, True):
        for off in range(0, 64, 7):
            for length in (0, 1, 17, 63, 64, 65, 200):
                dst = aligned_empty(512, np.uint8)
                dst[:] = guard
                src = rng.integers(0, 255, size=512, dtype=np.uint8)
                lines = aligned_flush(dst, off, src, 3, length, stream=stream)
                assert np.array_equal(dst[off:off + length], src[3:3 + length])
                assert (dst[:off] == guard).all() and (dst[off + length:] == guard).all()
                assert lines == (flush_plan(dst.ctypes.data + off, length)[1] if stream and
                                 bin_engine.STREAMING_SUPPORTED else lines)


def test_aligned_flush_validation():
    a = np.zeros(10, np.uint8)
    with pytest.raises(IndexError):
        aligned_flush(a, 5, a, 0, 6)
    with pytest.raises(TypeError):
        aligned_flush(a, 0, np.zeros(10, np.uint16), 0, 1)
    with pytest.raises(ValueError):
        aligned_flush(np.zeros((2, 5), np.uint8), 0, a, 0, 1)


def test_tiny_parent_sorts_and_counts_visits():
    rng = np.random.default_rng(13)
    for layout in (L80, L88, RecordLayout(16, 8)):
        for n in (0, 1, 33, 100, 256):
            for key_range in (None, 4):
                arr = random_records(rng, n, layout, key_range)
                orig = arr.copy()
                partition_tiny_parent(arr, 0)
                assert_oracle_sorted(arr, orig)
    arr = RecordArray.from_keys(rng.permutation(200) << 56, L88)
    assert partition_tiny_parent(arr, 0)[EN_PARENT_VISITS] == 0
    for _ in range(20):
        arr = random_records(rng, 256, L88)
        active = build_histogram(arr, 0, collect_subbins=True).active_subbins
        orig = arr.copy()
        assert partition_tiny_parent(arr, 0)[EN_PARENT_VISITS] == len(active)
        assert_oracle_sorted(arr, orig)
    with pytest.raises(ValueError):
        partition_tiny_parent(RecordArray.from_keys(range(300), L88), 0)


def test_tiny_parent_at_deeper_depth_keeps_prefix_grouping():
    # all keys share byte 0, so sorting from depth 1 must produce the full order
    keys = [(0x42 << 56) | int(k) for k in np.random.default_rng(14).integers(0, 2**40, 150)]
    arr = RecordArray.from_keys(keys, L88)
    partition_tiny_parent(arr, 1)
    assert arr.keys() == sorted(keys)
