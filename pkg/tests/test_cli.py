import json

import pytest

from exactlin.cli import EXIT_ERROR, EXIT_OK, EXIT_OSR, EXIT_USAGE, main
from exactlin.harness import corpus_dir
from exactlin.lpformat import read_lp

CORPUS = corpus_dir()


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "m.nlm"
    p.write_text("var x continuous [0, 6]\nvar b binary\nminimize: abs(x - 4) - 2*b*x\n"
                 "s.t. r: x + 3*b <= 7\n")
    return p


def test_detect(model_file, capsys):
    assert main(["detect", str(model_file)]) == EXIT_OK
    kinds = {r["kind"] for r in json.loads(capsys.readouterr().out)}
    assert kinds == {"abs", "bilinear"}


def test_linearize_writes_lp_and_trace(model_file, tmp_path):
    lp, trace = tmp_path / "m.lp", tmp_path / "t.json"
    assert main(["linearize", str(model_file), "-o", str(lp), "--trace", str(trace)]) == EXIT_OK
    assert read_lp(lp.read_text()).var_names()[:2] == ["x", "b"]
    doc = json.loads(trace.read_text())
    assert [it["kind"] for it in doc["iterations"]] == ["bilinear", "abs"]


def test_solve(model_file, capsys):
    assert main(["solve", str(model_file)]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "optimal"
    assert out["objective"] == pytest.approx(-8.0)


def test_verify_with_report(model_file, tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert main(["verify", str(model_file), "--report", str(rep)]) == EXIT_OK
    assert json.loads(rep.read_text())["verify"]["osr_pass"] is True


def test_bench_bundled_corpus(tmp_path, capsys):
    rep = tmp_path / "bench.json"
    assert main(["bench", "--report", str(rep)]) == EXIT_OK
    assert json.loads(rep.read_text())["aggregates"]["osr"] == 100.0
    assert "DSR 100.0%" in capsys.readouterr().out


def test_bench_failure_exit_code(tmp_path):
    (tmp_path / "bad.nlm").write_text("var x continuous [0, 1]\nvar y continuous [0, 1]\nminimize: x*y\n")
    (tmp_path / "bad.ann.json").write_text('{"expected_kinds": ["bilinear"], "source": "x"}')
    assert main(["bench", str(tmp_path)]) == EXIT_OSR


def test_gen_to_directory(tmp_path):
    assert main(["gen", "--seed", "1", "--count", "3", "--mix", "abs=1,min=1", "-o", str(tmp_path)]) == EXIT_OK
    assert len(list(tmp_path.glob("*.nlm"))) == 3
    assert main(["bench", str(tmp_path)]) == EXIT_OK


def test_errors_and_usage(tmp_path, capsys):
    assert main(["detect", str(tmp_path / "missing.nlm")]) == EXIT_ERROR
    bad = tmp_path / "bad.nlm"
    bad.write_text("var x continuous [0, 1]\nminimize: x +\n")
    assert main(["verify", str(bad)]) == EXIT_ERROR
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["verify", str(bad), "--tol", "abc"]) == EXIT_USAGE
    assert "exactlin" in capsys.readouterr().err
