import json
import subprocess
import sys

import numpy as np
import pytest

from masc.cli import main, read_labels
from masc.codebook import Codebook, load_codebook, save_codebook
from masc.mapping import load_mapping
from masc.metrics import load_report
from masc.sequence import TokenSequence, load_sequence, save_sequence
from masc.tree import load_trace, save_trace


@pytest.fixture
def blobs(tmp_path):
    assert main(["synth", "--kind", "blobs", "--sizes", "20,15,10", "--d", "3", "--seed", "1",
                 "--out", str(tmp_path / "cb.cbk"), "--labels-out", str(tmp_path / "labels.txt")]) == 0
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--kind", "bridge", "--seed", 7, "--out", tmp_path / f"{name}.cbk",
                   "--labels-out", tmp_path / f"{name}.txt") == 0
    assert (tmp_path / "a.cbk").read_bytes() == (tmp_path / "b.cbk").read_bytes()
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert read_labels(tmp_path / "a.txt").size == load_codebook(tmp_path / "a.cbk").n


def test_build_cut_pipeline(blobs, capsys):
    p = blobs
    assert run("build", "--codebook", p / "cb.cbk", "--k", 1, "--out", p / "t.json") == 0
    out = capsys.readouterr().out
    assert "steps=44" in out and "wall_seconds=" in out and "peak_memory_estimate_bytes=" in out
    assert run("cut", "--trace", p / "t.json", "--k", 45, "--out", p / "id.csv") == 0
    lines = (p / "id.csv").read_text().splitlines()
    assert lines[1:] == [f"{i},{i}" for i in range(45)]
    assert run("cut", "--trace", p / "t.json", "--k", 1, "--out", p / "root.json") == 0
    assert load_mapping(p / "root.json").assign.tolist() == [0] * 45
    assert run("cut", "--trace", p / "t.json", "--k", 3, "--out", p / "k3.json", "--check-refines", p / "id.csv") == 0


def test_build_k_equals_n(blobs):
    assert run("build", "--codebook", blobs / "cb.cbk", "--k", 45, "--out", blobs / "t.json") == 0
    t = load_trace(blobs / "t.json")
    assert t.records == [] and len(t.final_active) == 45


def test_build_reruns_are_byte_identical(blobs):
    for i, threads in enumerate((1, 3, 1)):
        assert run("build", "--codebook", blobs / "cb.cbk", "--threads", threads, "--out", blobs / f"t{i}.json") == 0
    first = (blobs / "t0.json").read_bytes()
    assert all((blobs / f"t{i}.json").read_bytes() == first for i in (1, 2))


def test_cut_below_stop_point_fails(blobs, capsys):
    run("build", "--codebook", blobs / "cb.cbk", "--k", 10, "--out", blobs / "t.json")
    assert run("cut", "--trace", blobs / "t.json", "--k", 3, "--out", blobs / "m.json") == 1
    assert "cannot cut" in capsys.readouterr().err


def test_check_refines_incompatible(blobs):
    run("build", "--codebook", blobs / "cb.cbk", "--out", blobs / "t.json")
    run("cut", "--trace", blobs / "t.json", "--k", 3, "--out", blobs / "k3.json")
    # a 5-way partition that splits across the 3-way cut
    assign = [i % 5 for i in range(45)]
    (blobs / "bad.json").write_text(json.dumps({"n": 45, "k": 5, "assign": assign}))
    assert run("cut", "--trace", blobs / "t.json", "--k", 3, "--out", blobs / "k3b.json",
               "--check-refines", blobs / "bad.json") == 3


def test_missing_codebook(tmp_path, capsys):
    assert run("build", "--codebook", tmp_path / "nope.cbk", "--out", tmp_path / "t.json") == 1
    assert "file not found" in capsys.readouterr().err


def test_map_decode_round_trip(blobs):
    p = blobs
    run("build", "--codebook", p / "cb.cbk", "--out", p / "t.json")
    run("cut", "--trace", p / "t.json", "--k", 4, "--out", p / "m.json")
    coarse = TokenSequence(np.random.default_rng(0).integers(0, 4, 300), 4)
    save_sequence(coarse, p / "coarse.txt")
    assert run("decode", "--mapping", p / "m.json", "--in", p / "coarse.txt", "--out", p / "fine.txt", "--seed", 1) == 0
    assert run("map", "--mapping", p / "m.json", "--in", p / "fine.txt", "--out", p / "back.txt") == 0
    assert (p / "back.txt").read_bytes() == (p / "coarse.txt").read_bytes()

    run("decode", "--mapping", p / "m.json", "--in", p / "coarse.txt", "--out", p / "fine2.txt", "--seed", 2)
    assert (p / "fine2.txt").read_bytes() != (p / "fine.txt").read_bytes()
    run("map", "--mapping", p / "m.json", "--in", p / "fine2.txt", "--out", p / "back2.txt")
    assert (p / "back2.txt").read_bytes() == (p / "coarse.txt").read_bytes()


def test_map_identity_is_copy(blobs):
    p = blobs
    run("build", "--codebook", p / "cb.cbk", "--out", p / "t.json")
    run("cut", "--trace", p / "t.json", "--k", 45, "--out", p / "id.json")
    save_sequence(TokenSequence([44, 0, 3, 3], 45), p / "fine.txt")
    run("map", "--mapping", p / "id.json", "--in", p / "fine.txt", "--out", p / "same.txt")
    assert (p / "same.txt").read_bytes() == (p / "fine.txt").read_bytes()


def test_map_vocab_mismatch(blobs):
    p = blobs
    run("build", "--codebook", p / "cb.cbk", "--out", p / "t.json")
    run("cut", "--trace", p / "t.json", "--k", 4, "--out", p / "m.json")
    save_sequence(TokenSequence([1, 2], 50), p / "fine.txt")
    assert run("map", "--mapping", p / "m.json", "--in", p / "fine.txt", "--out", p / "x.txt") == 1


def test_decode_requires_seed(blobs):
    with pytest.raises(SystemExit):
        run("decode", "--mapping", "m.json", "--in", "a", "--out", "b")


def test_kmeans_defaults_and_reproducible(blobs, capsys):
    p = blobs
    assert run("kmeans", "--codebook", p / "cb.cbk", "--k", 3, "--init", "pp", "--seed", 4, "--out", p / "a.json") == 0
    out1 = capsys.readouterr().out
    assert "restarts=10 max_iter=300 tol=0.0001" in out1
    run("kmeans", "--codebook", p / "cb.cbk", "--k", 3, "--init", "pp", "--seed", 4, "--out", p / "b.json")
    assert capsys.readouterr().out == out1
    assert (p / "a.json").read_bytes() == (p / "b.json").read_bytes()


def test_kmeans_k_equals_n(blobs, capsys):
    assert run("kmeans", "--codebook", blobs / "cb.cbk", "--k", 45, "--out", blobs / "a.csv") == 0
    assert "inertia=0.0" in capsys.readouterr().out


def test_stats_and_compare(blobs, capsys):
    p = blobs
    run("build", "--codebook", p / "cb.cbk", "--out", p / "t.json")
    run("cut", "--trace", p / "t.json", "--k", 45, "--out", p / "id.json")
    run("cut", "--trace", p / "t.json", "--k", 3, "--out", p / "k3.json")
    (p / "truth.json").write_text(json.dumps({"n": 45, "k": 3, "assign": read_labels(p / "labels.txt").tolist()}))
    save_sequence(TokenSequence(np.random.default_rng(0).integers(0, 45, 400), 45), p / "corpus.txt")

    assert run("stats", "--codebook", p / "cb.cbk", "--mapping", p / "k3.json", "--out", p / "s.json") == 0
    assert load_report(p / "s.json")["priors"][0]["k"] == 3

    assert run("compare", "--codebook", p / "cb.cbk", "--mapping", f"identity={p / 'id.json'}", f"masc={p / 'k3.json'}",
               f"truth={p / 'truth.json'}", "--corpus", p / "corpus.txt", "--truth", p / "labels.txt",
               "--out", p / "r.json", "--table", p / "r.txt") == 0
    report = load_report(p / "r.json")
    rows = {r["name"]: r for r in report["priors"]}
    assert rows["identity"]["coarse_entropy"]["h_bits"] == report["fine_entropy"]["h_bits"]
    assert rows["truth"]["ari"] == 1.0
    assert rows["masc"]["ari"] == 1.0
    assert "masc" in (p / "r.txt").read_text()


def test_compare_mismatched_n(blobs, tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"n": 4, "k": 1, "assign": [0, 0, 0, 0]}))
    assert run("compare", "--codebook", blobs / "cb.cbk", "--mapping", tmp_path / "m.json", "--out", tmp_path / "r.json") == 1


def test_verify_passes_and_detects_perturbation(blobs, capsys):
    p = blobs
    assert run("verify", "--codebook", p / "cb.cbk", "--linkage", "average", "single", "complete") == 0
    run("build", "--codebook", p / "cb.cbk", "--out", p / "t.json")
    assert run("verify", "--codebook", p / "cb.cbk", "--trace", p / "t.json") == 0
    t = load_trace(p / "t.json")
    doc = t.to_dict()
    doc["records"][10]["height"] *= 1 + 1e-6
    (p / "bad.json").write_text(json.dumps(doc))
    capsys.readouterr()
    assert run("verify", "--codebook", p / "cb.cbk", "--trace", p / "bad.json") == 3
    assert "MISMATCH" in capsys.readouterr().out


def test_verify_over_cap(blobs):
    assert run("verify", "--codebook", blobs / "cb.cbk", "--n-cap", 10) == 1


def test_threads_env_default(blobs, monkeypatch):
    monkeypatch.setenv("MASC_THREADS", "3")
    from masc.cli import make_parser

    args = make_parser().parse_args(["build", "--codebook", "x", "--out", "y"])
    assert args.threads == 3


def test_console_entry_point(tmp_path):
    save_codebook(Codebook(np.array([[0.0], [1.0], [10.0]])), tmp_path / "c.cbk")
    res = subprocess.run([sys.executable, "-m", "masc", "build", "--codebook", str(tmp_path / "c.cbk"),
                          "--out", str(tmp_path / "t.json")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert [r.height for r in load_trace(tmp_path / "t.json").records] == [1.0, 9.5]
    res = subprocess.run([sys.executable, "-m", "masc", "cut", "--trace", str(tmp_path / "missing.json"),
                          "--k", "1", "--out", str(tmp_path / "m.json")], capture_output=True, text=True)
    assert res.returncode == 1 and "file not found" in res.stderr
