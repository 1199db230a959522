import subprocess
import sys

import numpy as np
import pytest

from recsort import cli
from recsort.datagen import digest, generate, read_records, verify_sorted, write_records
from recsort.netgen import network_for
from recsort.records import RecordLayout


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    for p in (a, b):
        assert run("gen", "--n", 5000, "--key-bytes", 16, "--data-bytes", 8, "--dist", "zipf", "--seed", 3,
                   "--out", p) == 0
    assert a.read_bytes() == b.read_bytes()
    arr, seed = read_records(a)
    assert seed == 3 and arr.layout == RecordLayout(16, 8) and arr.count == 5000


def test_gen_rejects_bad_layout(tmp_path):
    assert run("gen", "--n", 10, "--key-bytes", 4, "--out", tmp_path / "x.bin") == cli.EXIT_USAGE
    assert not (tmp_path / "x.bin").exists()


def test_sort_with_verify(tmp_path, capsys):
    src, dst = tmp_path / "in.bin", tmp_path / "out.bin"
    run("gen", "--n", 100_000, "--dist", "uniform", "--seed", 1, "--out", src)
    before = digest(read_records(src)[0])
    assert run("sort", "--in", src, "--out", dst, "--verify", "--threads", 2) == 0
    assert "verify: ok" in capsys.readouterr().err
    assert verify_sorted(read_records(dst)[0], before)


def test_sort_truncated_input_leaves_no_output(tmp_path):
    src, dst = tmp_path / "in.bin", tmp_path / "out.bin"
    run("gen", "--n", 1000, "--out", src)
    src.write_bytes(src.read_bytes()[:-5])
    assert run("sort", "--in", src, "--out", dst) == cli.EXIT_IO
    assert not dst.exists()
    assert run("sort", "--in", tmp_path / "missing.bin", "--out", dst) == cli.EXIT_IO


def test_usage_errors(tmp_path, monkeypatch):
    assert run("bogus") == cli.EXIT_USAGE
    assert run("sort", "--in", "x") == cli.EXIT_USAGE
    assert run("sort", "--in", "x", "--out", "y", "--threads", 0) == cli.EXIT_USAGE
    assert run("sort", "--in", "x", "--out", "y", "--huge-fraction", "2") == cli.EXIT_USAGE
    assert run("netgen", "--n", 300) == cli.EXIT_USAGE
    monkeypatch.setenv("RADIX_SORT_THREADS", "many")
    src = tmp_path / "in.bin"
    write_records(src, generate(10, RecordLayout(8, 8)))
    assert run("sort", "--in", src, "--out", tmp_path / "o.bin") == cli.EXIT_USAGE


def test_netgen_output(capsys):
    assert run("netgen", "--n", 4, "--validate") == 0
    out = capsys.readouterr()
    assert out.out.strip() == network_for(4).format()
    assert "valid" in out.err
    assert run("netgen", "--n", 40, "--validate", "--trials", 1000) == 0


def test_tinybench_csv(tmp_path):
    out = tmp_path / "t.csv"
    assert run("tinybench", "--layouts", "8+8", "--sizes", "2-4", "--arrays", 20, "--reps", 3,
               "--algorithms", "IS,Hybrid", "--csv", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "algorithm,layout,n,ns_per_element" and len(lines) == 7


def test_bench_modes(tmp_path):
    out = tmp_path / "b.csv"
    assert run("bench", "--n", 20000, "--layouts", "8+0,16+0", "--threads-list", "1,2", "--reps", 3,
               "--csv", out) == 0
    assert len(out.read_text().splitlines()) == 5
    assert run("bench", "--n", 20000, "--scatter-ab", "--reps", 3, "--csv", out) == 0
    assert out.read_text().startswith("n,layout,dist,threads,counting_s,buffered_s,ratio")
    assert run("bench", "--n", 20000, "--scaling", "--max-threads", 2, "--reps", 3, "--csv", out) == 0
    assert run("bench", "--dist", "gauss", "--reps", 3) == cli.EXIT_USAGE


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "recsort", "netgen", "--n", "2"], capture_output=True, text=True)
    assert p.returncode == 0 and p.stdout.strip() == "0 1"
