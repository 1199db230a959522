import numpy as np
import pytest

from recsort.records import BENCH_LAYOUTS, RecordArray


def random_records(rng, n, layout, key_range=None):
    """Random records; ``key_range`` squeezes every key word into [0, key_range) to force ties."""
    w = rng.integers(0, 2**64, size=(n, layout.words), dtype=np.uint64)
    if key_range is not None:
        w[:, :layout.key_words] %= np.uint64(key_range)
    return RecordArray.from_words(w, layout)


def key_tuples(arr):
    return [tuple(int(x) for x in row) for row in arr.data[:, :arr.layout.key_words]]


def row_multiset(arr):
    return sorted(tuple(int(x) for x in row) for row in arr.data)


def assert_oracle_sorted(out, original):
    """Keys equal Python's comparison sort of the input keys and the record multiset is unchanged."""
    assert key_tuples(out) == sorted(key_tuples(original))
    assert row_multiset(out) == row_multiset(original)


def lexsort_keys(data, kw):
    """Vectorised oracle for large arrays: numpy's stable lexicographic sort of the key words."""
    order = np.argsort(data[:, 0], kind="stable") if kw == 1 else np.lexsort((data[:, 1], data[:, 0]))
    return data[order, :kw]


@pytest.fixture(params=BENCH_LAYOUTS, ids=str)
def layout(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
