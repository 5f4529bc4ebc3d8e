"""Structural scan for the six exactly-linearizable nonlinearity kinds.

Every occurrence is reported with a :class:`Path` (where it sits) and a
:class:`Polarity` (which encoding is exact for it).  The effective sign of an
occurrence is the product of its multiplier, the objective direction or the
constraint side and relation; equality constraints have no direction.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .errors import UnsupportedNonlinearity
from .ir import (
    Abs, Const, Expr, Max, Min, Mono, Prod, Quot, Sum, Var,
    affine_form, child_label, children, has_vars, interval_of, node_at,
)
from .model import Model, Rel, Sense


class PatternKind(str, Enum):
    BILINEAR = "bilinear"
    MIN = "min"
    MAX = "max"
    ABS = "abs"
    LINEAR_FRACTIONAL = "fractional"
    MONOTONE = "monotone"


class Polarity(str, Enum):
    BENIGN = "benign"
    ADVERSE = "adverse"
    CONSTRAINT_SPLIT = "constraint_split"


@dataclass(frozen=True)
class Path:
    location: str          # "objective" or a constraint name
    side: str | None       # "lhs" / "rhs" for constraints
    chain: tuple = ()      # child indices from the side's root

    def labels(self, model: Model) -> list[str]:
        node = self.root(model)
        out = []
        for i in self.chain:
            out.append(child_label(node, i))
            node = children(node)[i]
        return out

    def root(self, model: Model) -> Expr:
        if self.location == "objective":
            return model.objective
        c = model.constraint(self.location)
        return c.lhs if self.side == "lhs" else c.rhs

    def render(self, model: Model) -> str:
        head = [self.location] + ([self.side] if self.side else [])
        return ".".join(head + self.labels(model))


@dataclass(frozen=True)
class PatternInstance:
    kind: PatternKind
    path: Path
    args: tuple
    polarity: Polarity
    sign: int = 1           # effective direction, 0 inside an equality
    fn: str | None = None   # monotone function name


# ---------------------------------------------------------------------------
# scanning

@dataclass
class _Hit:
    kind: PatternKind
    path: Path
    args: tuple
    sign: int
    fn: str | None = None


def _context_sign(model: Model, location: str, side: str | None) -> int:
    if location == "objective":
        return 1 if model.sense is Sense.MINIMIZE else -1
    rel = model.constraint(location).rel
    if rel is Rel.EQ:
        return 0
    s = 1 if side == "lhs" else -1
    return s if rel is Rel.LE else -s


def _sgn(v: float) -> int:
    return (v > 0) - (v < 0)


def _require_affine(e: Expr, where: str, params) -> None:
    if affine_form(e, params) is None:
        raise UnsupportedNonlinearity(where, "nested nonlinearity inside a pattern argument")


class _Scanner:
    def __init__(self, model: Model):
        self.model = model
        self.params = model.param_values()
        self.decls = model.var_map()
        self.hits: list[_Hit] = []

    def run(self) -> list[_Hit]:
        for loc, side, e in self.model.expressions():
            self.ctx = _context_sign(self.model, loc, side)
            self.loc, self.side = loc, side
            self.visit(e, (), 1.0, loc + (f".{side}" if side else ""))
        return self.hits

    def add(self, kind, chain, args, coef, fn=None):
        self.hits.append(_Hit(kind, Path(self.loc, self.side, chain), tuple(args), _sgn(coef) * self.ctx, fn))

    def visit(self, e: Expr, chain: tuple, coef: float, where: str) -> None:
        if isinstance(e, (Const, Var)) or not has_vars(e):
            return
        if isinstance(e, Sum):
            for i, t in enumerate(e.terms):
                self.visit(t, chain + (i,), coef, f"{where}.term[{i}]")
        elif isinstance(e, Prod):
            self.product(e, chain, coef, where)
        elif isinstance(e, Abs):
            _require_affine(e.arg, where, self.params)
            self.add(PatternKind.ABS, chain, (e.arg,), coef)
        elif isinstance(e, (Min, Max)):
            for a in e.args:
                _require_affine(a, where, self.params)
            self.add(PatternKind.MIN if isinstance(e, Min) else PatternKind.MAX, chain, e.args, coef)
        elif isinstance(e, Quot):
            self.quotient(e, chain, coef, where)
        elif isinstance(e, Mono):
            self.monotone(e, chain, coef, where)
        else:
            raise UnsupportedNonlinearity(where, f"unexpected node {type(e).__name__}")

    def product(self, e: Prod, chain, coef, where):
        scale = 1.0
        bearing = []
        for i, f in enumerate(e.factors):
            if has_vars(f):
                bearing.append(i)
            else:
                v = affine_form(f, self.params)
                if v is None:
                    raise UnsupportedNonlinearity(where, "non-constant factor without variables")
                scale *= v[1]
        if len(bearing) == 1:
            i = bearing[0]
            self.visit(e.factors[i], chain + (i,), coef * scale, f"{where}.factor[{i}]")
            return
        if len(bearing) > 2:
            raise UnsupportedNonlinearity(where, "product of three or more variable-bearing factors")
        f0, f1 = (e.factors[i] for i in bearing)
        forms = []
        for f in (f0, f1):
            form = affine_form(f, self.params)
            if form is None:
                raise UnsupportedNonlinearity(where, "nonlinearity nested inside a product")
            forms.append(form)
        for u in forms[0][0]:
            for v in forms[1][0]:
                self._check_pair(u, v, where)
        self.add(PatternKind.BILINEAR, chain, (f0, f1), coef * scale)

    def _check_pair(self, u: str, v: str, where: str) -> None:
        du, dv = self.decls[u], self.decls[v]
        if not (du.is_binary or dv.is_binary):
            raise UnsupportedNonlinearity(where, f"product {u}*{v} has no binary factor")
        other = dv if du.is_binary else du
        if not (math.isfinite(other.lower) and math.isfinite(other.upper)):
            raise UnsupportedNonlinearity(where, f"product {u}*{v}: {other.name} is unbounded")

    def quotient(self, e: Quot, chain, coef, where):
        for part in (e.num, e.den):
            _require_affine(part, where, self.params)
        den = interval_of(e.den, self.model)
        if not den.lo > 0:
            raise UnsupportedNonlinearity(where, "denominator positivity cannot be proven from bounds")
        self.add(PatternKind.LINEAR_FRACTIONAL, chain, (e.num, e.den), coef)

    def monotone(self, e: Mono, chain, coef, where):
        _require_affine(e.arg, where, self.params)
        if chain:
            raise UnsupportedNonlinearity(where, f"{e.fn}(...) must be a whole objective or constraint side")
        if self.side is not None:
            c = self.model.constraint(self.loc)
            other = c.rhs if self.side == "lhs" else c.lhs
            if has_vars(other):
                raise UnsupportedNonlinearity(where, f"{e.fn}(...) must be compared with a constant")
        arg = interval_of(e.arg, self.model)
        if e.fn == "log" and not arg.lo > 0:
            raise UnsupportedNonlinearity(where, "log argument is not provably positive")
        if e.fn == "sqrt" and not arg.lo >= 0:
            raise UnsupportedNonlinearity(where, "sqrt argument is not provably non-negative")
        self.add(PatternKind.MONOTONE, chain, (e.arg,), coef, e.fn)


def _polarity(hit: _Hit, model: Model, per_location: Counter) -> Polarity:
    kind, s = hit.kind, hit.sign
    if kind in (PatternKind.MIN, PatternKind.MAX):
        good = 1 if kind is PatternKind.MAX else -1
        if s == good:
            sole = hit.path.location != "objective" and per_location[hit.path.location] == 1
            return Polarity.CONSTRAINT_SPLIT if sole else Polarity.BENIGN
        return Polarity.ADVERSE
    if kind is PatternKind.ABS:
        return Polarity.BENIGN if s > 0 else Polarity.ADVERSE
    return Polarity.BENIGN


def _finish(hits: list[_Hit], model: Model) -> list[PatternInstance]:
    per_location = Counter(h.path.location for h in hits)
    return [
        PatternInstance(h.kind, h.path, h.args, _polarity(h, model, per_location), h.sign, h.fn)
        for h in hits
    ]


def detect_patterns(model: Model) -> list[PatternInstance]:
    """All pattern occurrences in ``model`` (normalized first), in scan order."""
    model = model.normalized()
    return _finish(_Scanner(model).run(), model)


def polarity_of(instance: PatternInstance, model: Model) -> Polarity:
    for inst in detect_patterns(model):
        if inst.kind is instance.kind and inst.path == instance.path:
            return inst.polarity
    raise KeyError(f"no {instance.kind.value} instance at {instance.path}")


def applicable_kinds(model: Model) -> set[PatternKind]:
    return {i.kind for i in detect_patterns(model)}


def resolve_path(model: Model, path: Path) -> Expr:
    return node_at(path.root(model), path.chain)


def detection_report(model: Model) -> list[dict]:
    """JSON-ready list of ``{kind, path, polarity}`` entries."""
    model = model.normalized()
    return [
        {"kind": i.kind.value, "path": i.path.render(model), "polarity": i.polarity.value}
        for i in detect_patterns(model)
    ]
