"""Immutable expression trees plus evaluation, normalization and affine analysis.

Normal form produced by :func:`normalize`:

* parameters are replaced by their numeric values, ``Neg`` never survives;
* a ``Sum`` has at least two terms, none of which is a ``Sum``; like terms are
  merged and the constant (if nonzero) comes last;
* a ``Prod`` has at least two factors, none of which is a ``Prod`` or a
  ``Sum`` scaled by a constant; the numeric coefficient, when not 1, is the
  first factor;
* ``Abs``/``Min``/``Max``/``Quot``/``Mono`` over constants are folded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .errors import DomainError, NotLinear, UnboundedInterval, UnboundSymbol

MONO_FUNCTIONS = ("exp", "log", "sqrt")


class Expr:
    """Base class for expression nodes. Supports ``+ - * /`` for convenience."""

    __slots__ = ()

    def __add__(self, other):
        return Sum((self, as_expr(other)))

    def __radd__(self, other):
        return Sum((as_expr(other), self))

    def __sub__(self, other):
        return Sum((self, Neg(as_expr(other))))

    def __rsub__(self, other):
        return Sum((as_expr(other), Neg(self)))

    def __mul__(self, other):
        return Prod((self, as_expr(other)))

    def __rmul__(self, other):
        return Prod((as_expr(other), self))

    def __truediv__(self, other):
        return Quot(self, as_expr(other))

    def __rtruediv__(self, other):
        return Quot(as_expr(other), self)

    def __neg__(self):
        return Neg(self)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"{self.value:g}"


@dataclass(frozen=True, repr=False)
class Param(Expr):
    name: str

    def __repr__(self):
        return f"${self.name}"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True, repr=False)
class Sum(Expr):
    terms: tuple

    def __repr__(self):
        return "(" + " + ".join(map(repr, self.terms)) + ")"


@dataclass(frozen=True, repr=False)
class Prod(Expr):
    factors: tuple

    def __repr__(self):
        return "*".join(map(repr, self.factors))


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    def __repr__(self):
        return f"-{self.arg!r}"


@dataclass(frozen=True, repr=False)
class Abs(Expr):
    arg: Expr

    def __repr__(self):
        return f"abs({self.arg!r})"


@dataclass(frozen=True, repr=False)
class Min(Expr):
    args: tuple

    def __post_init__(self):
        if len(self.args) < 2:
            raise ValueError("min needs at least two arguments")

    def __repr__(self):
        return "min(" + ", ".join(map(repr, self.args)) + ")"


@dataclass(frozen=True, repr=False)
class Max(Expr):
    args: tuple

    def __post_init__(self):
        if len(self.args) < 2:
            raise ValueError("max needs at least two arguments")

    def __repr__(self):
        return "max(" + ", ".join(map(repr, self.args)) + ")"


@dataclass(frozen=True, repr=False)
class Quot(Expr):
    num: Expr
    den: Expr

    def __repr__(self):
        return f"({self.num!r})/({self.den!r})"


@dataclass(frozen=True, repr=False)
class Mono(Expr):
    fn: str
    arg: Expr

    def __post_init__(self):
        if self.fn not in MONO_FUNCTIONS:
            raise ValueError(f"unknown monotone function {self.fn!r}")

    def __repr__(self):
        return f"{self.fn}({self.arg!r})"


PATTERN_NODES = (Abs, Min, Max, Quot, Mono)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Const(float(value))
    raise TypeError(f"cannot convert {value!r} to an expression")


# ---------------------------------------------------------------------------
# generic traversal

def children(e: Expr) -> tuple:
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Prod):
        return e.factors
    if isinstance(e, (Min, Max)):
        return e.args
    if isinstance(e, (Neg, Abs, Mono)):
        return (e.arg,)
    if isinstance(e, Quot):
        return (e.num, e.den)
    return ()


def with_children(e: Expr, kids) -> Expr:
    kids = tuple(kids)
    if isinstance(e, Sum):
        return Sum(kids)
    if isinstance(e, Prod):
        return Prod(kids)
    if isinstance(e, Min):
        return Min(kids)
    if isinstance(e, Max):
        return Max(kids)
    if isinstance(e, Neg):
        return Neg(kids[0])
    if isinstance(e, Abs):
        return Abs(kids[0])
    if isinstance(e, Mono):
        return Mono(e.fn, kids[0])
    if isinstance(e, Quot):
        return Quot(kids[0], kids[1])
    return e


def child_label(e: Expr, index: int) -> str:
    """Human-readable step used when rendering occurrence paths."""
    if isinstance(e, Sum):
        return f"term[{index}]"
    if isinstance(e, Prod):
        return f"factor[{index}]"
    if isinstance(e, (Min, Max)):
        return f"arg[{index}]"
    if isinstance(e, Quot):
        return "num" if index == 0 else "den"
    return "arg"


def walk(e: Expr):
    """Pre-order iteration over all nodes."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def variables(e: Expr) -> list[str]:
    """Variable names in first-occurrence order."""
    seen: dict[str, None] = {}
    for node in walk(e):
        if isinstance(node, Var):
            seen.setdefault(node.name)
    return list(seen)


def has_vars(e: Expr) -> bool:
    return any(isinstance(n, Var) for n in walk(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions. The result is not normalized."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    kids = children(e)
    if not kids:
        return e
    return with_children(e, (substitute(k, mapping) for k in kids))


def replace_at(e: Expr, chain: tuple, new: Expr) -> Expr:
    if not chain:
        return new
    kids = list(children(e))
    head, rest = chain[0], chain[1:]
    kids[head] = replace_at(kids[head], rest, new)
    return with_children(e, kids)


def node_at(e: Expr, chain: tuple) -> Expr:
    for i in chain:
        e = children(e)[i]
    return e


# ---------------------------------------------------------------------------
# evaluation

def _apply_mono(fn: str, v: float) -> float:
    if fn == "exp":
        try:
            return math.exp(v)
        except OverflowError:
            return math.inf
    if fn == "log":
        if v <= 0:
            raise DomainError(f"log of non-positive value {v}")
        return math.log(v)
    if v < 0:
        raise DomainError(f"sqrt of negative value {v}")
    return math.sqrt(v)


def evaluate(e: Expr, assignment: Mapping[str, float], params: Mapping[str, float] | None = None) -> float:
    params = params or {}
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(assignment[e.name])
        except KeyError:
            raise UnboundSymbol(f"variable {e.name!r} has no value") from None
    if isinstance(e, Param):
        try:
            return float(params[e.name])
        except KeyError:
            raise UnboundSymbol(f"parameter {e.name!r} is not bound") from None
    if isinstance(e, Sum):
        return math.fsum(evaluate(t, assignment, params) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, assignment, params)
        return out
    if isinstance(e, Neg):
        return -evaluate(e.arg, assignment, params)
    if isinstance(e, Abs):
        return abs(evaluate(e.arg, assignment, params))
    if isinstance(e, Min):
        return min(evaluate(a, assignment, params) for a in e.args)
    if isinstance(e, Max):
        return max(evaluate(a, assignment, params) for a in e.args)
    if isinstance(e, Quot):
        den = evaluate(e.den, assignment, params)
        if den == 0:
            raise DomainError("division by zero")
        return evaluate(e.num, assignment, params) / den
    if isinstance(e, Mono):
        return _apply_mono(e.fn, evaluate(e.arg, assignment, params))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# normalization

def _c(v: float) -> Const:
    return Const(float(v) + 0.0)


def _coef_split(e: Expr):
    if isinstance(e, Const):
        return e.value, None
    if isinstance(e, Prod) and isinstance(e.factors[0], Const):
        rest = e.factors[1:]
        return e.factors[0].value, rest[0] if len(rest) == 1 else Prod(rest)
    return 1.0, e


def _make_term(coef: float, core):
    if core is None:
        return _c(coef)
    if coef == 1.0:
        return core
    if isinstance(core, Prod):
        return Prod((_c(coef),) + core.factors)
    return Prod((_c(coef), core))


def _norm_sum(terms: Iterable[Expr]) -> Expr:
    acc: dict = {}

    def add(t):
        coef, core = _coef_split(t)
        acc[core] = acc.get(core, 0.0) + coef

    for t in terms:
        if isinstance(t, Sum):
            for s in t.terms:
                add(s)
        else:
            add(t)
    out = [_make_term(c, core) for core, c in acc.items() if core is not None and c != 0]
    const = acc.get(None, 0.0)
    if const != 0:
        out.append(_c(const))
    if not out:
        return _c(0.0)
    if len(out) == 1:
        return out[0]
    return Sum(tuple(out))


def _scale(e: Expr, coef: float) -> Expr:
    """Multiply an already-normalized expression by a constant."""
    if coef == 0:
        return _c(0.0)
    if isinstance(e, Sum):
        return _norm_sum(_scale(t, coef) for t in e.terms)
    c, core = _coef_split(e)
    return _make_term(c * coef, core)


def _norm_prod(factors: Iterable[Expr]) -> Expr:
    coef = 1.0
    rest = []
    for f in factors:
        parts = f.factors if isinstance(f, Prod) else (f,)
        for g in parts:
            if isinstance(g, Const):
                coef *= g.value
            else:
                rest.append(g)
    if not rest:
        return _c(coef)
    if coef == 0:
        return _c(0.0)
    if len(rest) == 1:
        return _scale(rest[0], coef)
    return _make_term(coef, Prod(tuple(rest)))


def normalize(e: Expr, params: Mapping[str, float] | None = None) -> Expr:
    """Return the canonical form of ``e`` (see module docstring)."""
    params = params or {}
    return _norm(e, params)


def _norm(e: Expr, params) -> Expr:
    if isinstance(e, Const):
        return _c(e.value)
    if isinstance(e, Var):
        return e
    if isinstance(e, Param):
        if e.name not in params:
            raise UnboundSymbol(f"parameter {e.name!r} is not bound")
        return _c(params[e.name])
    if isinstance(e, Neg):
        return _scale(_norm(e.arg, params), -1.0)
    if isinstance(e, Sum):
        return _norm_sum(_norm(t, params) for t in e.terms)
    if isinstance(e, Prod):
        return _norm_prod(_norm(f, params) for f in e.factors)
    if isinstance(e, Quot):
        num, den = _norm(e.num, params), _norm(e.den, params)
        if isinstance(den, Const):
            if den.value == 0:
                raise DomainError("division by zero")
            return _scale(num, 1.0 / den.value)
        if isinstance(num, Const) and num.value == 0:
            return _c(0.0)
        return Quot(num, den)
    if isinstance(e, Abs):
        arg = _norm(e.arg, params)
        return _c(abs(arg.value)) if isinstance(arg, Const) else Abs(arg)
    if isinstance(e, (Min, Max)):
        args = tuple(_norm(a, params) for a in e.args)
        if all(isinstance(a, Const) for a in args):
            pick = min if isinstance(e, Min) else max
            return _c(pick(a.value for a in args))
        return type(e)(args)
    if isinstance(e, Mono):
        arg = _norm(e.arg, params)
        if isinstance(arg, Const):
            return _c(_apply_mono(e.fn, arg.value))
        return Mono(e.fn, arg)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# affine analysis

def affine_form(e: Expr, params: Mapping[str, float] | None = None):
    """Return ``(coeffs, offset)`` if ``e`` is affine in its variables, else None.

    Zero coefficients are dropped from ``coeffs``.
    """
    res = _affine(e, params or {})
    if res is None:
        return None
    coeffs, offset = res
    return {k: v for k, v in coeffs.items() if v != 0}, offset


def _affine(e, params):
    if isinstance(e, Const):
        return {}, e.value
    if isinstance(e, Var):
        return {e.name: 1.0}, 0.0
    if isinstance(e, Param):
        if e.name not in params:
            raise UnboundSymbol(f"parameter {e.name!r} is not bound")
        return {}, float(params[e.name])
    if isinstance(e, Neg):
        r = _affine(e.arg, params)
        if r is None:
            return None
        return {k: -v for k, v in r[0].items()}, -r[1]
    if isinstance(e, Sum):
        coeffs: dict[str, float] = {}
        offset = 0.0
        for t in e.terms:
            r = _affine(t, params)
            if r is None:
                return None
            for k, v in r[0].items():
                coeffs[k] = coeffs.get(k, 0.0) + v
            offset += r[1]
        return coeffs, offset
    if isinstance(e, Prod):
        coeffs, offset = {}, 1.0
        for f in e.factors:
            r = _affine(f, params)
            if r is None:
                return None
            fc, fo = r
            if any(fc.values()) and any(coeffs.values()):
                return None
            coeffs = {k: v * fo for k, v in coeffs.items()}
            for k, v in fc.items():
                coeffs[k] = coeffs.get(k, 0.0) + v * offset
            offset *= fo
        return coeffs, offset
    if isinstance(e, Quot):
        den = _affine(e.den, params)
        num = _affine(e.num, params)
        if den is None or num is None or any(den[0].values()) or den[1] == 0:
            return None
        d = den[1]
        return {k: v / d for k, v in num[0].items()}, num[1] / d
    return None


class AffinityKind(Enum):
    CONSTANT_ONLY = "constant"
    AFFINE = "affine"
    NONLINEAR_PATTERN = "pattern"
    UNSUPPORTED = "unsupported"


@dataclass
class Affinity:
    kind: AffinityKind
    coeffs: dict = field(default_factory=dict)
    offset: float = 0.0

    @property
    def is_linear(self) -> bool:
        return self.kind in (AffinityKind.CONSTANT_ONLY, AffinityKind.AFFINE)


def affinity_of(e: Expr, model=None) -> Affinity:
    params = model.param_values() if model is not None else {}
    form = affine_form(e, params)
    if form is not None:
        coeffs, offset = form
        kind = AffinityKind.AFFINE if coeffs else AffinityKind.CONSTANT_ONLY
        return Affinity(kind, coeffs, offset)
    has_pattern = False
    for node in walk(e):
        if isinstance(node, PATTERN_NODES):
            has_pattern = True
        elif isinstance(node, Prod):
            bearing = sum(1 for f in node.factors if has_vars(f))
            if bearing >= 3:
                return Affinity(AffinityKind.UNSUPPORTED)
            if bearing == 2:
                has_pattern = True
    return Affinity(AffinityKind.NONLINEAR_PATTERN if has_pattern else AffinityKind.UNSUPPORTED)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi


def interval_of(e: Expr, model, require_finite: bool = False) -> Interval:
    """Exact range of an affine expression over the model's variable box."""
    form = affine_form(e, model.param_values())
    if form is None:
        raise NotLinear("expr", f"interval_of needs an affine expression, got {e!r}")
    coeffs, offset = form
    decls = model.var_map()
    lo = hi = offset
    for name, c in coeffs.items():
        try:
            d = decls[name]
        except KeyError:
            raise UnboundSymbol(f"variable {name!r} is not declared") from None
        if c > 0:
            lo += c * d.lower
            hi += c * d.upper
        else:
            lo += c * d.upper
            hi += c * d.lower
    if require_finite and not (math.isfinite(lo) and math.isfinite(hi)):
        raise UnboundedInterval(f"unbounded range [{lo}, {hi}] for {e!r}")
    return Interval(lo, hi)
