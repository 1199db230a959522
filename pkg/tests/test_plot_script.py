import importlib.util
from pathlib import Path

import pytest

from recsort import bench

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "plot_bench.py"
spec = importlib.util.spec_from_file_location("plot_bench", SCRIPT)
plot_bench = importlib.util.module_from_spec(spec)
spec.loader.exec_module(plot_bench)


def test_load_recognises_both_csv_kinds(tmp_path):
    t = tmp_path / "t.csv"
    bench.write_csv([dict(algorithm="IS", layout="8+8", n=2, ns_per_element=1.5)], bench.TINY_COLUMNS, t)
    assert plot_bench.load(t)[0] == "tiny"
    b = tmp_path / "b.csv"
    bench.write_csv([dict(n=10, layout="8+8", dist="uniform", threads=1, median_s=0.1, records_per_s=100.0,
                          speedup_vs_1thread=1.0)], bench.BENCH_COLUMNS, b)
    assert plot_bench.load(b)[0] == "bench"
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        plot_bench.load(bad)
