import csv

import pytest

from h4ham.cli import main, parse_sizes, regenerate
from h4ham.core import (
    TightCycle,
    format_certificate,
    parse_comments,
    read_certificate,
    read_graph,
)
from h4ham.extremal import InstanceRecipe, build_benchmark

import brute


@pytest.fixture(scope="module")
def bench_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "b40.h4"
    assert main(["gen", "--bench", "--n", "40", "--mediums", "1", "-o", str(path)]) == 0
    return path


def test_gen_round_trip(bench_file):
    text = bench_file.read_text()
    H = read_graph(text)
    comments = parse_comments(text)
    assert H.vertex_count == 80
    assert brute.edge_set(H) == brute.edge_set(regenerate(comments).graph)
    assert brute.edge_set(H) == brute.edge_set(build_benchmark(InstanceRecipe(40, medium_seeds=1)).graph)
    assert len(comments["side_a"].split(",")) == 40


def test_gen_h0_and_complete(tmp_path, capsys):
    assert main(["gen", "--h0", "--n", "4", "-o", str(tmp_path / "h0.h4")]) == 0
    assert read_graph((tmp_path / "h0.h4").read_text()).edge_count == 32
    assert main(["gen", "--complete", "--n", "8"]) == 0
    assert read_graph(capsys.readouterr().out).edge_count == 70


def test_solve_and_verify(bench_file, tmp_path, capsys):
    cert = tmp_path / "c.cert"
    assert main(["solve", str(bench_file), "--mode", "cycle", "-o", str(cert), "--trace"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("instance ")
    assert "trace case 3" in out
    assert out.splitlines()[-1].startswith("success size=80 ")
    C = read_certificate(cert.read_text())
    assert isinstance(C, TightCycle) and sorted(C.sequence) == list(range(80))
    assert main(["verify", str(bench_file), str(cert), "--cycle"]) == 0
    assert capsys.readouterr().out.strip() == "YES"
    assert main(["verify", str(bench_file), str(cert), "--path"]) == 1
    capsys.readouterr()
    # reversing a cycle keeps it tight; swapping two far-apart vertices breaks it
    seq = list(C.sequence)
    (tmp_path / "rev.cert").write_text(format_certificate(TightCycle(tuple(reversed(seq)))))
    assert main(["verify", str(bench_file), str(tmp_path / "rev.cert")]) == 0
    a_pos = next(i for i, v in enumerate(seq) if v < 40)
    b_pos = next(i for i, v in enumerate(seq) if v >= 40 and abs(i - a_pos) > 4)
    seq[a_pos], seq[b_pos] = seq[b_pos], seq[a_pos]
    (tmp_path / "bad.cert").write_text(format_certificate(TightCycle(tuple(seq))))
    assert main(["verify", str(bench_file), str(tmp_path / "bad.cert")]) == 1
    assert capsys.readouterr().out.splitlines()[-1].startswith("NO")


def test_solve_path(bench_file, tmp_path, capsys):
    assert main(["solve", str(bench_file), "--mode", "path", "-o", str(tmp_path / "p.cert")]) == 0
    assert main(["verify", str(bench_file), str(tmp_path / "p.cert"), "--path"]) == 0


def test_solve_h0_reports_stage(tmp_path, capsys):
    g = tmp_path / "h0.h4"
    main(["gen", "--h0", "--n", "20", "-o", str(g)])
    assert main(["solve", str(g)]) == 1
    assert capsys.readouterr().out.splitlines()[-1].startswith("failure stage=threshold reason=ThresholdNotMet")


def test_check(bench_file, tmp_path, capsys):
    assert main(["check", str(bench_file)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("partition comment ")
    assert "claim coro1 " in out
    g = tmp_path / "h0.h4"
    main(["gen", "--h0", "--n", "10", "-o", str(g)])
    capsys.readouterr()
    assert main(["check", str(g), "--classes"]) == 0
    assert "vclass 0 typical" in capsys.readouterr().out
    k = tmp_path / "k.h4"
    main(["gen", "--complete", "--n", "10", "-o", str(k)])
    assert main(["check", str(k)]) == 3


def test_oracle(tmp_path, capsys):
    g = tmp_path / "h0.h4"
    main(["gen", "--h0", "--n", "4", "-o", str(g)])
    assert main(["oracle", str(g), "--path"]) == 1
    assert capsys.readouterr().out.strip() == "NO"
    k = tmp_path / "k.h4"
    main(["gen", "--complete", "--n", "8", "-o", str(k)])
    assert main(["oracle", str(k), "--cycle"]) == 0
    assert sorted(map(int, capsys.readouterr().out.split()[1:])) == list(range(8))
    big = tmp_path / "big.h4"
    main(["gen", "--h0", "--n", "9", "-o", str(big)])
    assert main(["oracle", str(big), "--path"]) == 2
    assert capsys.readouterr().out.startswith("TOO-LARGE")


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["gen"]) == 2
    assert main(["gen", "--n", "1"]) == 2
    assert main(["verify", str(tmp_path / "missing.h4"), "x"]) == 2
    bad = tmp_path / "bad.h4"
    bad.write_text("garbage\n")
    assert main(["solve", str(bad)]) == 2
    assert main(["bench", "--n", "x..y"]) == 2
    with pytest.raises(Exception):
        parse_sizes("")


def test_parse_sizes():
    assert parse_sizes("20..60") == [20, 40, 60]
    assert parse_sizes("20,30") == [20, 30]
    assert parse_sizes("10..30", step=10) == [10, 20, 30]


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bench", "--n", "20", "--reps", "2", "--mode", "both", "--force-case3", "-o", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert all(r["outcome"] == "success" for r in rows)
    assert all(r["case"] == "3" for r in rows if r["mode"] == "cycle")
    err = capsys.readouterr().err
    assert "# cycle: 2/2 success, case3 runs 2" in err
