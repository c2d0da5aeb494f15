import csv
import io
import json
import os

import pytest

from spectree.cli import run


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_decompose(capsys):
    code, out, _ = call(capsys, "decompose", "--family", "power:2", "--depth", "5", "--tol", "1e-8")
    d = json.loads(out)
    assert code == 0 and d["ok"] and d["max_mismatch"] < 1e-8
    assert d["schema_version"] == 1 and d["command"] == "decompose"
    blk = d["blocks"][1]
    assert set(blk) >= {"n", "size", "multiplicity", "offdiag", "diag", "eigenvalues"}


def test_decompose_budget_exit_one(capsys, monkeypatch):
    monkeypatch.setenv("SPECTREE_BUDGET", "20")
    code, out, _ = call(capsys, "decompose", "--family", "constant:3", "--depth", "5")
    assert code == 1 and json.loads(out)["ok"] is False


def test_classify(capsys):
    code, out, _ = call(capsys, "classify", "--family", "power:3")
    assert code == 0
    assert json.loads(out)["verdict"]["outcome"] == "InfiniteDeficiency"
    code, out, _ = call(capsys, "classify", "--family", "power:1.5")
    assert json.loads(out)["verdict"]["outcome"] == "SelfAdjoint"


def test_classify_batch(capsys, tmp_path):
    f = tmp_path / "batch.json"
    f.write_text(json.dumps([{"family": "power:1"}, {"family": "power:3"}, {"family": "explicit:2,3,2,3"}]))
    code, out, _ = call(capsys, "classify", "--batch", str(f))
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["family", "outcome", "criterion", "statistic"]
    assert [r[1] for r in rows[1:]] == ["SelfAdjoint", "InfiniteDeficiency", "Inconclusive"]


def test_classify_needs_family(capsys):
    code, _, err = call(capsys, "classify")
    assert code == 2 and "usage" in err


def test_defect_csv(capsys):
    code, out, _ = call(capsys, "defect", "--family", "constant:1", "--n-max", "4")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["k", "re", "im", "abs2", "partial_sum"]
    assert [float(x) for x in rows[2][1:3]] == [0.0, 1.0]
    assert len(rows) == 5


def test_defect_json_and_tree(capsys):
    code, out, _ = call(capsys, "defect", "--family", "power:1", "--json")
    assert code == 0 and json.loads(out)["profile"]["verdict"] == "LikelyDivergent"
    code, out, _ = call(capsys, "defect", "--family", "constant:2", "--tree", "--depth", "5", "--json")
    d = json.loads(out)
    assert d["residual"] <= 1e-12 and d["sibling_constant"] and d["sphere_norm_inequality"]


def test_gw(capsys, tmp_path):
    summary = tmp_path / "summary.json"
    code, out, _ = call(capsys, "gw", "--dist", "poisson:2", "--samples", "200", "--seed", "1", "--max-depth", "4", "--summary", str(summary))
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["sample", "components", "max_component_size", "max_depth", "censored"]
    assert len(rows) == 201
    s = json.loads(summary.read_text())
    assert s["threshold"] == 3 and s["pruning_report"]["censored"] == 0 and s["passed"]


def test_gw_bad_dist(capsys):
    code, _, _ = call(capsys, "gw", "--dist", "zipf:2")
    assert code == 2


def test_surgery_check(capsys, tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({
        "components": [{"edges": [[0, 1], [1, 2]]}, {"edges": [[0, 1]]}],
        "added": [[[0, 2], [1, 0], 1.5], [[0, 0], [1, 1]]],
    }))
    code, out, _ = call(capsys, "surgery-check", "--input", str(f))
    d = json.loads(out)
    assert code == 0 and d["passed"] and d["exact_norm"] <= d["sqrt_bound"]


def test_split(capsys, tmp_path):
    f = tmp_path / "band.txt"
    f.write_text("6 1\n0 1\n0 5\n0 1\n0 5\n0 1\n0 0\n")
    code, out, _ = call(capsys, "split", "--input", str(f), "--bound", "1", "--json")
    d = json.loads(out)
    assert code == 0 and d["cuts"] == [1, 3, 5] and d["block_sizes"] == [1, 2, 2, 1]
    code, out, _ = call(capsys, "split", "--input", str(f), "--bound", "0.5")
    assert code == 1 and json.loads(out)["ok"] is False


def test_tensor(capsys):
    code, out, _ = call(capsys, "tensor", "--eta", "5", "--graph", "complete:2")
    assert code == 0 and json.loads(out)["tensor_deficiency"] == 10
    code, out, _ = call(capsys, "tensor", "--eta", "inf", "--graph", "path:3")
    assert json.loads(out)["tensor_deficiency"] == "inf"
    code, _, _ = call(capsys, "tensor", "--eta", "-1", "--graph", "path:3")
    assert code == 2


def test_norms(capsys):
    code, out, _ = call(capsys, "norms", "--graph", "star:4", "--vertex", "0")
    row = json.loads(out)["rows"][0]
    assert code == 0 and (row["adjacency"], row["laplacian"]) == (4.0, 20.0)


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = call(capsys, "decompose", "--family", "power:2", "--frobnicate")
    assert code == 2 and "usage" in err
    code, _, _ = call(capsys, "decompose", "--family", "nonsense:1")
    assert code == 2


def test_outputs_are_deterministic(capsys):
    argvs = [
        ("gw", "--dist", "geom:0.4", "--samples", "50", "--seed", "7"),
        ("classify", "--family", "power:2.5", "--json"),
        ("defect", "--family", "periodic:2,3", "--n-max", "50"),
    ]
    for argv in argvs:
        a = call(capsys, *argv)
        b = call(capsys, *argv)
        assert a == b


def test_out_is_written_atomically(capsys, tmp_path):
    target = tmp_path / "report.json"
    target.write_text("old")
    code, out, _ = call(capsys, "tensor", "--eta", "1", "--graph", "complete:3", "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["rank"] == 3
    assert os.listdir(tmp_path) == ["report.json"]
