import numpy as np
import pytest

from conftest import assert_oracle_sorted, key_tuples, random_records
from recsort import tiny
from recsort.netgen import batcher_odd_even, network_for
from recsort.records import BENCH_LAYOUTS, RecordArray, RecordLayout
from recsort.tiny import (Algo, ST_BQS_MAX_LEVEL, ST_COMPARATORS, ST_ES_PLACEMENTS, ST_HEAPSORTS,
                          ST_IS_SHIFTS, TinyDispatchRule, block_quicksort, default_rule,
                          enum_then_insertion, enumeration_sort, hybrid_sort, insertion_sort,
                          make_workspace, network_sort, select_algorithm, shell_sort, single_rule)

L80, L88, L160, L168 = RecordLayout(8, 0), RecordLayout(8, 8), RecordLayout(16, 0), RecordLayout(16, 8)


def test_insertion_examples():
    arr = RecordArray.from_keys([3, 1, 2], L80)
    insertion_sort(arr)
    assert arr.keys() == [1, 2, 3]
    arr = RecordArray.from_keys([5], L80)
    insertion_sort(arr)
    assert arr.keys() == [5]
    insertion_sort(RecordArray.from_keys([], L80))


def test_enumeration_sort_is_stable():
    arr = RecordArray.from_keys([2, 2, 1], L88, payload=[10, 20, 30])
    enumeration_sort(arr)
    assert arr.keys() == [1, 2, 2]
    assert list(arr.data[:, 1]) == [30, 10, 20]


def test_enumeration_places_each_record_once():
    rng = np.random.default_rng(1)
    for n in (2, 7, 17, 40, 64):
        arr = random_records(rng, n, L88)
        ws = make_workspace(2)
        enumeration_sort(arr, ws=ws)
        assert ws.stats[ST_ES_PLACEMENTS] == n


def test_es_is_examples():
    arr = RecordArray.from_keys([(1 << 64) | 5, (1 << 64) | 3, 0 << 64 | 9], L160)
    enum_then_insertion(arr)
    assert arr.keys() == [9, (1 << 64) | 3, (1 << 64) | 5]
    arr = RecordArray.from_keys([(7 << 64) | 2, (7 << 64) | 1], L160)
    enum_then_insertion(arr)
    assert arr.keys() == [(7 << 64) | 1, (7 << 64) | 2]


def test_es_is_distinct_msb_needs_no_insertion_work():
    rng = np.random.default_rng(2)
    msbs = rng.permutation(1000)[:24]
    keys = [(int(m) << 64) | int(rng.integers(0, 2**63)) for m in msbs]
    arr = RecordArray.from_keys(keys, L168)
    ws = make_workspace(3)
    enum_then_insertion(arr, ws=ws)
    assert arr.keys() == sorted(keys)
    assert ws.stats[ST_IS_SHIFTS] == 0


def test_es_is_rejects_8_byte_keys():
    with pytest.raises(ValueError):
        enum_then_insertion(RecordArray.from_keys([1, 2], L88))


def test_network_sort_example_and_length_mismatch():
    arr = RecordArray.from_keys([4, 3, 2, 1], L80)
    network_sort(arr)
    assert arr.keys() == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        network_sort(RecordArray.from_keys([1, 2, 3], L80), network_for(4))


def test_network_comparator_trace_ignores_input():
    rng = np.random.default_rng(3)
    for n in (5, 16, 33, 64):
        counts = set()
        for inp in (np.arange(n), np.arange(n)[::-1], rng.permutation(n), np.zeros(n)):
            arr = RecordArray.from_keys(inp, L88)
            ws = make_workspace(2)
            network_sort(arr, ws=ws)
            counts.add(int(ws.stats[ST_COMPARATORS]))
            assert arr.keys() == sorted(int(x) for x in inp)
        assert counts == {network_for(n).size}


def test_block_quicksort_all_equal_and_budget():
    arr = RecordArray.from_keys([7] * 1000, L88)
    ws = make_workspace(2)
    block_quicksort(arr, tiny=Algo.IS, ws=ws)
    assert arr.keys() == [7] * 1000
    assert sorted(arr.data[:, 1].tolist()) == list(range(1000))
    budget = 2 * 1000 .bit_length() - 1
    assert ws.stats[ST_BQS_MAX_LEVEL] <= budget


def test_block_quicksort_heapsort_guard():
    rng = np.random.default_rng(4)
    arr = random_records(rng, 5000, L88)
    orig = arr.copy()
    ws = make_workspace(2)
    block_quicksort(arr, tiny=Algo.SN, depth_budget=2, ws=ws)
    assert_oracle_sorted(arr, orig)
    assert ws.stats[ST_BQS_MAX_LEVEL] <= 2
    assert ws.stats[ST_HEAPSORTS] >= 1


@pytest.mark.parametrize("bad", [dict(tiny=Algo.SHELL), dict(depth_budget=0), dict(leaf_ceiling=0),
                                 dict(tiny=Algo.SN, leaf_ceiling=65), dict(tiny=Algo.ES_IS)])
def test_block_quicksort_argument_validation(bad):
    with pytest.raises(ValueError):
        block_quicksort(RecordArray.from_keys(range(10), L88), **bad)


def test_dispatch_examples():
    assert select_algorithm(default_rule(L88), 16) == Algo.ES
    assert select_algorithm(default_rule(L88), 17) == Algo.SN
    assert select_algorithm(default_rule(L88), 33) == Algo.BQS_SN
    assert select_algorithm(default_rule(L80), 64) == Algo.SN
    assert select_algorithm(default_rule(L80), 65) == Algo.BQS_SN
    assert select_algorithm(default_rule(RecordLayout(8, 24)), 24) == Algo.ES
    assert select_algorithm(default_rule(L160), 25) == Algo.BQS_ES_IS


def test_dispatch_is_pure_and_matches_rule():
    for lay in BENCH_LAYOUTS:
        rule = default_rule(lay)
        for n in range(0, 300):
            assert select_algorithm(rule, n) == rule.algorithm_for(n) == select_algorithm(rule, n)


@pytest.mark.parametrize("segments", [((24, Algo.ES),), ((30, Algo.ES), (20, Algo.SN), (None, Algo.BQS_ES)),
                                      ((16, Algo.ES), (None, Algo.SN)), ((65, Algo.SN), (None, Algo.BQS_SN))])
def test_rule_validation(segments):
    with pytest.raises(ValueError):
        TinyDispatchRule(L88, segments)


def test_rule_ceilings():
    assert default_rule(L88).ceiling == 32
    assert default_rule(L80).ceiling == 64
    assert default_rule(L160).leaf_ceiling == 24
    assert single_rule(L88, Algo.IS).ceiling == 64


SORTERS = [
    ("IS", lambda a: insertion_sort(a)),
    ("Shell", lambda a: shell_sort(a)),
    ("ES", lambda a: enumeration_sort(a)),
    ("SN", lambda a: network_sort(a) if a.count <= 64 else network_sort(a, batcher_odd_even(a.count))),
    ("BQS_IS", lambda a: block_quicksort(a, tiny=Algo.IS)),
    ("BQS_SN", lambda a: block_quicksort(a, tiny=Algo.SN)),
    ("BQS_ES", lambda a: block_quicksort(a, tiny=Algo.ES)),
    ("Hybrid", lambda a: hybrid_sort(a)),
]


@pytest.mark.parametrize("name,fn", SORTERS, ids=[s[0] for s in SORTERS])
def test_sorters_match_oracle(name, fn, layout):
    rng = np.random.default_rng(5)
    sizes = list(range(0, 70)) + [100, 129, 200, 256]
    for n in sizes:
        if name == "SN" and n > 256:
            continue
        for key_range in (None, 3):
            arr = random_records(rng, n, layout, key_range)
            orig = arr.copy()
            fn(arr)
            assert_oracle_sorted(arr, orig)


def test_es_is_and_bqs_es_is_match_oracle():
    rng = np.random.default_rng(6)
    for lay in (L160, L168):
        for n in list(range(0, 40)) + [100, 300]:
            for key_range in (None, 2):
                arr = random_records(rng, n, lay, key_range)
                orig = arr.copy()
                (enum_then_insertion if n <= 256 else lambda a: block_quicksort(a, tiny=Algo.ES_IS))(arr)
                assert_oracle_sorted(arr, orig)
                arr = orig.copy()
                block_quicksort(arr, tiny=Algo.ES_IS)
                assert_oracle_sorted(arr, orig)


def test_subrange_leaves_outside_untouched():
    rng = np.random.default_rng(7)
    arr = random_records(rng, 50, L88)
    orig = arr.copy()
    hybrid_sort(arr, lo=10, hi=40)
    assert np.array_equal(arr.data[:10], orig.data[:10]) and np.array_equal(arr.data[40:], orig.data[40:])
    assert key_tuples(RecordArray.from_words(arr.data[10:40], L88)) == sorted(
        key_tuples(RecordArray.from_words(orig.data[10:40], L88)))
    with pytest.raises(IndexError):
        hybrid_sort(arr, lo=10, hi=60)


def test_hybrid_rejects_foreign_rule():
    with pytest.raises(ValueError):
        hybrid_sort(RecordArray.from_keys([1, 2], L80), default_rule(L88))


def test_batch_sort_sorts_every_run():
    rng = np.random.default_rng(8)
    n, runs = 37, 50
    arr = random_records(rng, n * runs, L88)
    orig = arr.copy()
    rule = default_rule(L88)
    tiny.batch_sort(arr.data, n, -1, 1, rule.plan(), make_workspace(2))
    for r in range(runs):
        part = RecordArray.from_words(arr.data[r * n:(r + 1) * n], L88)
        assert_oracle_sorted(part, RecordArray.from_words(orig.data[r * n:(r + 1) * n], L88))
