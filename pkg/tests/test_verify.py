import math

import pytest

from exactlin.nlm import parse_model
from exactlin.report import emit_json_report
from exactlin.rewrite import RewriteTrace, run_fixpoint
from exactlin.verify import VerifyReport, is_feasible, verify_equivalence

M = parse_model("var x continuous [0, 6]\nvar b binary\nminimize: abs(x - 4) - 2*b*x\n"
                "s.t. r: x + 3*b <= 7\n")


def test_verify_passes_on_exact_rewrite():
    lin, trace = run_fixpoint(M)
    rep = verify_equivalence(M, lin, trace)
    assert rep.osr_pass and rep.projected_feasible
    assert rep.abs_gap <= 1e-9
    assert rep.recovered_obj == pytest.approx(rep.oracle_obj)


def test_verify_rejects_nonlinear_target():
    rep = verify_equivalence(M, M, RewriteTrace())
    assert not rep.osr_pass and rep.reformulated_obj is None


def test_verify_detects_a_relaxation():
    lin, trace = run_fixpoint(M)
    loose = lin.with_(constraints=tuple(c for c in lin.constraints if not c.name.startswith("_lin_bilinear")))
    rep = verify_equivalence(M, loose, trace)
    assert not rep.osr_pass


def test_infeasible_models_agree():
    m = parse_model("var x continuous [0, 1]\nminimize: abs(x)\ns.t. r: x >= 2\n")
    lin, trace = run_fixpoint(m)
    assert verify_equivalence(m, lin, trace).osr_pass


def test_is_feasible():
    assert is_feasible(M, {"x": 4.0, "b": 1.0})
    assert not is_feasible(M, {"x": 5.0, "b": 1.0})
    assert not is_feasible(M, {"x": 1.0, "b": 0.5})


def test_json_report_is_stable():
    texts = set()
    for _ in range(2):
        lin, trace = run_fixpoint(M)
        texts.add(emit_json_report(trace, verify_equivalence(M, lin, trace), "m.nlm"))
    (text,) = texts
    assert '"kind": "bilinear"' in text and '"osr_pass": true' in text


def test_json_report_writes_null_for_nonfinite():
    text = emit_json_report(RewriteTrace(), VerifyReport(math.inf, math.nan, None, None, False, False))
    assert "Infinity" not in text and "NaN" not in text
