"""Reader and writer for the line-oriented ``.nlm`` model format.

A statement occupies one line; indented lines continue the previous
statement. ``#`` starts a comment.

    var x continuous [0, 10]
    var b binary
    param d = 2.5
    minimize: 3*x + d*abs(x - 4)
    s.t. cap: x + 2*b <= 8
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ExactlinError, ModelParseError
from .ir import (
    Abs, Const, Expr, Max, Min, Mono, Neg, Param, Prod, Quot, Sum, Var, normalize, substitute, walk,
)
from .model import Constraint, Domain, Model, ParamBinding, Rel, Sense, VarDecl

MAX_DEPTH = 100
FUNCTIONS = {"abs": (1, 1), "min": (2, None), "max": (2, None), "exp": (1, 1), "log": (1, 1), "sqrt": (1, 1)}
KEYWORDS = {"var", "param", "minimize", "maximize"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\f\v]+)
  | (?P<comment>\#.*)
  | (?P<st>s\.t\.)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|=|\+|-|\*|/|\(|\)|\[|\]|,|:)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


class _Fail(Exception):
    def __init__(self, line, col, message):
        self.diag = ParseDiagnostic(line, col, message)


def _tokenize_line(text: str, lineno: int) -> list[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise _Fail(lineno, pos + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append(_Tok(kind, m.group(), lineno, pos + 1))
        pos = m.end()
    return out


def _statements(text: str):
    """Group physical lines into logical statements of tokens."""
    current: list[_Tok] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokenize_line(raw, lineno)
        if not toks:
            continue
        if raw[:1] in (" ", "\t") and current is not None:
            current.extend(toks)
            continue
        if current:
            yield current
        current = toks
    if current:
        yield current


class _ExprParser:
    def __init__(self, toks: list[_Tok], refs: list):
        self.toks = toks
        self.pos = 0
        self.depth = 0
        self.refs = refs

    # helpers
    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            last = self.toks[-1]
            raise _Fail(last.line, last.col + len(last.text), "unexpected end of statement")
        self.pos += 1
        return tok

    def expect(self, text):
        tok = self.take()
        if tok.text != text:
            raise _Fail(tok.line, tok.col, f"expected {text!r}, found {tok.text!r}")
        return tok

    def _enter(self, tok):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise _Fail(tok.line, tok.col, "expression nested too deeply")

    # grammar
    def expr(self) -> Expr:
        terms = [self.term()]
        while (tok := self.peek()) is not None and tok.text in ("+", "-"):
            self.pos += 1
            t = self.term()
            terms.append(t if tok.text == "+" else Neg(t))
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self) -> Expr:
        factors = [self.unary()]
        while (tok := self.peek()) is not None and tok.text in ("*", "/"):
            self.pos += 1
            rhs = self.unary()
            if tok.text == "*":
                factors.append(rhs)
            else:
                left = factors[0] if len(factors) == 1 else Prod(tuple(factors))
                factors = [Quot(left, rhs)]
        return factors[0] if len(factors) == 1 else Prod(tuple(factors))

    def unary(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok.text in ("-", "+"):
            self.pos += 1
            self._enter(tok)
            inner = self.unary()
            self.depth -= 1
            return Neg(inner) if tok.text == "-" else inner
        return self.primary()

    def primary(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            value = float(tok.text)
            if not math.isfinite(value):
                raise _Fail(tok.line, tok.col, f"number out of range: {tok.text}")
            return Const(value)
        if tok.text == "(":
            self._enter(tok)
            inner = self.expr()
            self.expect(")")
            self.depth -= 1
            return inner
        if tok.kind == "ident":
            if tok.text in FUNCTIONS:
                return self.call(tok)
            if tok.text in KEYWORDS:
                raise _Fail(tok.line, tok.col, f"keyword {tok.text!r} used as identifier")
            self.refs.append(tok)
            return Var(tok.text)
        raise _Fail(tok.line, tok.col, f"unexpected token {tok.text!r}")

    def call(self, name_tok) -> Expr:
        self.expect("(")
        self._enter(name_tok)
        args = [self.expr()]
        while (tok := self.peek()) is not None and tok.text == ",":
            self.pos += 1
            args.append(self.expr())
        self.expect(")")
        self.depth -= 1
        lo, hi = FUNCTIONS[name_tok.text]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise _Fail(name_tok.line, name_tok.col, f"{name_tok.text} takes {lo if hi else f'at least {lo}'} argument(s), got {len(args)}")
        fn = name_tok.text
        if fn == "abs":
            return Abs(args[0])
        if fn == "min":
            return Min(tuple(args))
        if fn == "max":
            return Max(tuple(args))
        return Mono(fn, args[0])


def _signed_number(p: _ExprParser, allow_inf=True) -> float:
    tok = p.take()
    sign = 1.0
    if tok.text in ("-", "+"):
        sign = -1.0 if tok.text == "-" else 1.0
        tok = p.take()
    if tok.kind == "num":
        value = float(tok.text)
        if not math.isfinite(value):
            raise _Fail(tok.line, tok.col, f"number out of range: {tok.text}")
        return sign * value
    if allow_inf and tok.text == "inf":
        return sign * math.inf
    raise _Fail(tok.line, tok.col, f"expected a number, found {tok.text!r}")


def parse_model_diagnostics(text) -> tuple[Model | None, list[ParseDiagnostic]]:
    """Parse NLM text; return ``(model or None, diagnostics)``. Never raises."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            line = bytes(text[: exc.start]).count(b"\n") + 1
            return None, [ParseDiagnostic(line, 1, "input is not valid UTF-8")]
    diags: list[ParseDiagnostic] = []
    vars_: dict[str, VarDecl] = {}
    params: dict[str, float] = {}
    declared_at: dict[str, int] = {}
    objective = None
    sense = None
    cons: list[tuple] = []
    cons_names: set[str] = set()
    refs: list[_Tok] = []

    try:
        statements = list(_statements(text))
    except _Fail as f:
        return None, [f.diag]

    for toks in statements:
        head = toks[0]
        p = _ExprParser(toks, refs)
        try:
            p.pos = 1
            if head.text == "var":
                name = p.take()
                if name.kind != "ident" or name.text in KEYWORDS or name.text in FUNCTIONS:
                    raise _Fail(name.line, name.col, "expected a variable name")
                dom_tok = p.take()
                try:
                    domain = Domain(dom_tok.text)
                except ValueError:
                    raise _Fail(dom_tok.line, dom_tok.col, f"unknown domain {dom_tok.text!r}") from None
                lo, hi = (0.0, 1.0) if domain is Domain.BINARY else (0.0, math.inf)
                if p.peek() is not None:
                    p.expect("[")
                    lo = _signed_number(p)
                    p.expect(",")
                    hi = _signed_number(p)
                    p.expect("]")
                if p.peek() is not None:
                    t = p.peek()
                    raise _Fail(t.line, t.col, f"unexpected token {t.text!r}")
                if name.text in declared_at:
                    raise _Fail(head.line, head.col, f"duplicate declaration of {name.text!r}")
                if lo == math.inf or hi == -math.inf or lo > hi:
                    raise _Fail(name.line, name.col, f"invalid bounds [{lo}, {hi}] for {name.text!r}")
                if domain is Domain.BINARY and (lo < 0 or hi > 1):
                    raise _Fail(name.line, name.col, f"binary variable {name.text!r} has bounds outside [0,1]")
                vars_[name.text] = VarDecl(name.text, domain, lo, hi)
                declared_at[name.text] = head.line
            elif head.text == "param":
                name = p.take()
                if name.kind != "ident" or name.text in KEYWORDS or name.text in FUNCTIONS:
                    raise _Fail(name.line, name.col, "expected a parameter name")
                p.expect("=")
                value = _signed_number(p, allow_inf=False)
                if p.peek() is not None:
                    t = p.peek()
                    raise _Fail(t.line, t.col, f"unexpected token {t.text!r}")
                if name.text in declared_at:
                    raise _Fail(head.line, head.col, f"duplicate declaration of {name.text!r}")
                params[name.text] = value
                declared_at[name.text] = head.line
            elif head.text in ("minimize", "maximize"):
                p.expect(":")
                e = p.expr()
                if p.peek() is not None:
                    t = p.peek()
                    raise _Fail(t.line, t.col, f"unexpected token {t.text!r}")
                if objective is not None:
                    raise _Fail(head.line, head.col, "duplicate objective")
                objective, sense = e, Sense(head.text)
            elif head.kind == "st":
                name = p.take()
                if name.kind != "ident":
                    raise _Fail(name.line, name.col, "expected a constraint name")
                p.expect(":")
                lhs = p.expr()
                rel_tok = p.take()
                if rel_tok.text not in ("<=", ">=", "=", "=="):
                    raise _Fail(rel_tok.line, rel_tok.col, f"expected <=, >= or =, found {rel_tok.text!r}")
                rhs = p.expr()
                if p.peek() is not None:
                    t = p.peek()
                    raise _Fail(t.line, t.col, f"unexpected token {t.text!r}")
                if name.text in cons_names:
                    raise _Fail(name.line, name.col, f"duplicate constraint name {name.text!r}")
                cons_names.add(name.text)
                rel = Rel.EQ if rel_tok.text == "==" else Rel(rel_tok.text)
                cons.append((name.text, lhs, rel, rhs, head.line))
            else:
                raise _Fail(head.line, head.col, f"unexpected token {head.text!r} at start of statement")
        except _Fail as f:
            diags.append(f.diag)

    used: set[str] = set()
    for tok in refs:
        if tok.text in vars_ or tok.text in params:
            used.add(tok.text)
        else:
            diags.append(ParseDiagnostic(tok.line, tok.col, f"unknown identifier {tok.text!r}"))
    if objective is None and not any(d.severity == "error" for d in diags):
        last = statements[-1][0].line if statements else 1
        diags.append(ParseDiagnostic(last, 1, "model has no objective"))
    if any(d.severity == "error" for d in diags):
        return None, sorted(diags, key=lambda d: (d.line, d.column))

    for name in vars_:
        if name not in used:
            diags.append(ParseDiagnostic(declared_at[name], 1, f"variable {name!r} is never used", "warning"))

    as_param = {n: Param(n) for n in params}
    try:
        model = Model(
            vars=tuple(vars_.values()),
            params=tuple(ParamBinding(n, v) for n, v in params.items()),
            sense=sense,
            objective=substitute(objective, as_param),
            constraints=tuple(
                Constraint(n, substitute(lhs, as_param), rel, substitute(rhs, as_param)) for n, lhs, rel, rhs, _ in cons
            ),
        ).validate()
    except ExactlinError as exc:
        return None, diags + [ParseDiagnostic(1, 1, str(exc))]

    norm_obj = _normalize_or_diag(model.objective, params, diags, 1)
    norm_cons = []
    for (n, _lhs, _rel, _rhs, line), c in zip(cons, model.constraints):
        lhs = _normalize_or_diag(c.lhs, params, diags, line)
        rhs = _normalize_or_diag(c.rhs, params, diags, line)
        norm_cons.append(Constraint(n, lhs, c.rel, rhs))
    if any(d.severity == "error" for d in diags):
        return None, diags
    return model.with_(objective=norm_obj, constraints=tuple(norm_cons)), diags


def _normalize_or_diag(e, params, diags, line):
    try:
        out = normalize(e, params)
    except ExactlinError as exc:
        diags.append(ParseDiagnostic(line, 1, str(exc)))
        return None
    for node in walk(out):
        if isinstance(node, Const) and not math.isfinite(node.value):
            diags.append(ParseDiagnostic(line, 1, "expression folds to a non-finite constant"))
            return None
    return out


def parse_model(text) -> Model:
    """Parse NLM text into a normalized Model; raise ModelParseError on errors."""
    model, diags = parse_model_diagnostics(text)
    if model is None:
        raise ModelParseError([d for d in diags if d.severity == "error"])
    return model


# ---------------------------------------------------------------------------
# writer

def format_number(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def format_expr(e: Expr) -> str:
    return _fmt(e, 0)


# precedence: 0 sum context, 1 product context, 2 atom context
def _fmt(e: Expr, ctx: int) -> str:
    if isinstance(e, Const):
        s = format_number(e.value)
        return f"({s})" if e.value < 0 and ctx > 0 else s
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Sum):
        parts = []
        for i, t in enumerate(e.terms):
            s = _fmt(t, 0)
            if i == 0:
                parts.append(s)
            elif s.startswith("-"):
                parts.append(" - " + s[1:])
            else:
                parts.append(" + " + s)
        s = "".join(parts)
        return f"({s})" if ctx > 0 else s
    if isinstance(e, Neg):
        s = "-" + _fmt(e.arg, 2)
        return f"({s})" if ctx > 0 else s
    if isinstance(e, Prod):
        first, rest = e.factors[0], e.factors[1:]
        if isinstance(first, Const) and first.value < 0:
            lead = [] if first.value == -1 else [format_number(-first.value)]
            s = "-" + "*".join(lead + [_fmt(f, 2) for f in rest])
            return f"({s})" if ctx > 0 else s
        if isinstance(first, Const) and first.value == 1:
            rest_only = rest
        else:
            rest_only = e.factors
        s = "*".join(_fmt(f, 2) for f in rest_only)
        return f"({s})" if ctx > 1 else s
    if isinstance(e, Quot):
        s = f"{_fmt(e.num, 2)}/{_fmt(e.den, 2)}"
        return f"({s})" if ctx > 1 else s
    if isinstance(e, Abs):
        return f"abs({_fmt(e.arg, 0)})"
    if isinstance(e, (Min, Max)):
        fn = "min" if isinstance(e, Min) else "max"
        return f"{fn}(" + ", ".join(_fmt(a, 0) for a in e.args) + ")"
    if isinstance(e, Mono):
        return f"{e.fn}({_fmt(e.arg, 0)})"
    raise TypeError(f"not an expression: {e!r}")


def format_model(model: Model) -> str:
    lines = []
    for v in model.vars:
        if v.domain is Domain.BINARY and (v.lower, v.upper) == (0.0, 1.0):
            lines.append(f"var {v.name} binary")
        else:
            lines.append(f"var {v.name} {v.domain.value} [{format_number(v.lower)}, {format_number(v.upper)}]")
    for p in model.params:
        lines.append(f"param {p.name} = {format_number(p.value)}")
    lines.append(f"{model.sense.value}: {format_expr(model.objective)}")
    for c in model.constraints:
        lines.append(f"s.t. {c.name}: {format_expr(c.lhs)} {c.rel.value} {format_expr(c.rhs)}")
    return "\n".join(lines) + "\n"
