import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from exactlin.errors import ModelParseError
from exactlin.harness import gen_models
from exactlin.ir import Abs, Mono, Quot, walk
from exactlin.model import Domain, Rel, Sense
from exactlin.nlm import format_model, parse_model, parse_model_diagnostics

BASIC = """
# comment line
var x continuous [0, 10]
var b binary
var n integer [0, inf]
param d = 2.5
maximize: 3*x + d*abs(x - 4)
    - n / (x + 1)
s.t. cap: x + 2*b <= 8
s.t. bal: exp(x) >= 1
"""


def test_parse_declarations():
    m = parse_model(BASIC)
    assert [v.name for v in m.vars] == ["x", "b", "n"]
    assert m.var_map()["b"].domain is Domain.BINARY
    assert m.var_map()["n"].upper == math.inf
    assert m.param_values() == {"d": 2.5}
    assert m.sense is Sense.MAXIMIZE
    assert [c.name for c in m.constraints] == ["cap", "bal"]
    assert m.constraint("cap").rel is Rel.LE


def test_continuation_lines_join_the_objective():
    m = parse_model(BASIC)
    assert any(isinstance(n, Quot) for n in walk(m.objective))
    assert any(isinstance(n, Abs) for n in walk(m.objective))
    assert isinstance(m.constraint("bal").lhs, Mono)


@pytest.mark.parametrize("text, fragment", [
    ("var x continuous [0, 1]\nminimize: y", "y"),
    ("var x continuous [0, 1]\nvar x binary\nminimize: x", "x"),
    ("var x continuous [0, 1]\nminimize: x +", ""),
    ("var x continuous [0, 1]\nminimize: foo(x)", "foo"),
    ("var x continuous [0, 1]\nminimize: abs(x, x)", "abs"),
    ("var x continuous [2, 1]\nminimize: x", ""),
    ("var x continuous [0, 1]", "objective"),
])
def test_parse_errors_carry_position(text, fragment):
    with pytest.raises(ModelParseError) as info:
        parse_model(text)
    d = info.value.diagnostics[0]
    assert d.line >= 1 and d.column >= 1
    assert fragment in str(info.value)


def test_diagnostics_never_raise_on_bytes():
    model, diags = parse_model_diagnostics(b"\xff\xfe var")
    assert model is None and diags


def test_deep_nesting_is_rejected_not_crashing():
    text = "var x continuous [0, 1]\nminimize: " + "(" * 5000 + "x" + ")" * 5000
    model, diags = parse_model_diagnostics(text)
    assert model is None and diags


def test_format_roundtrip_on_generated_models():
    for model, _ in gen_models(seed=3, count=40):
        again = parse_model(format_model(model))
        assert again.normalized() == model.normalized()


_ALPHABET = "varxyzbinaryconulsmiefp0123456789.+-*/()[],:=<>#\n\t _s.t.absminmaxexplogsqrt"


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=_ALPHABET, max_size=400))
def test_parser_total_on_random_text(text):
    model, diags = parse_model_diagnostics(text)
    assert (model is None) == any(d.severity == "error" for d in diags)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=300))
def test_parser_total_on_random_bytes(data):
    parse_model_diagnostics(data)


def test_mutated_corpus_text_never_crashes():
    rng = random.Random(11)
    base = format_model(gen_models(seed=1, count=1)[0][0])
    for _ in range(500):
        chars = list(base)
        for _ in range(rng.randint(1, 8)):
            chars[rng.randrange(len(chars))] = rng.choice(_ALPHABET)
        parse_model_diagnostics("".join(chars))
