"""Exact rewrite operators and the fixpoint driver.

Each operator takes a model and the instances of one kind found in it, and
returns a :class:`RewriteResult` whose model no longer contains that kind.
Auxiliary variables are named ``_aux_<kind>_<n>`` and the constraints that
define them ``_lin_<kind>_<n>_<i>``.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field

from .detect import PatternInstance, PatternKind, Polarity, applicable_kinds, detect_patterns, resolve_path
from .errors import (
    DenominatorNotPositive, FractionalNotIsolated, FractionalWithIntegers, NonAffineArg,
    NonInvertibleOnRange, NonTermination, ProjectionFailure, UnboundedInterval,
)
from .ir import Const, Expr, Interval, Sum, Var, affine_form, has_vars, interval_of, normalize, replace_at
from .linear import constraint_rows
from .model import Constraint, Domain, Model, Rel, VarDecl

MAX_ITERATIONS = 12
PRIORITY = (
    PatternKind.MONOTONE,
    PatternKind.BILINEAR,
    PatternKind.ABS,
    PatternKind.MIN,
    PatternKind.MAX,
    PatternKind.LINEAR_FRACTIONAL,
)
ABS_ENCODINGS = ("epigraph", "parts")


@dataclass(frozen=True)
class BigMDerivation:
    constraint: str
    m_value: float
    source_interval: Interval


@dataclass(frozen=True)
class PostSolve:
    fn: str
    direction: str = "increasing"

    def apply(self, value: float) -> float:
        if self.fn == "exp":
            try:
                return math.exp(value)
            except OverflowError:
                return math.inf
        if self.fn == "log":
            return math.log(value)
        return math.sqrt(max(value, 0.0))


@dataclass(frozen=True)
class Recovery:
    """Charnes-Cooper back-substitution ``x = y / scale``."""

    scale: str
    mapping: tuple  # ((original, scaled), ...)

    def apply(self, assignment: dict) -> dict:
        if self.scale not in assignment:
            raise ProjectionFailure(f"scale variable {self.scale!r} missing from solution")
        tau = assignment[self.scale]
        if not tau > 0:
            raise ProjectionFailure(f"scale variable {self.scale!r} is not positive ({tau})")
        out = {}
        for x, y in self.mapping:
            if y not in assignment:
                raise ProjectionFailure(f"scaled variable {y!r} missing from solution")
            out[x] = assignment[y] / tau
        return out


@dataclass
class RewriteResult:
    model: Model
    aux_vars: list = field(default_factory=list)
    aux_constraints: list = field(default_factory=list)
    big_m: list = field(default_factory=list)
    post_solve: PostSolve | None = None
    recovery: Recovery | None = None
    notes: list = field(default_factory=list)


@dataclass
class Iteration:
    t: int
    kind: PatternKind
    instances: int
    aux_vars: list
    aux_constraints: list
    big_m: list
    notes: list = field(default_factory=list)


@dataclass
class RewriteTrace:
    iterations: list = field(default_factory=list)
    post_solve: PostSolve | None = None
    recovery: Recovery | None = None

    def __len__(self):
        return len(self.iterations)

    def recover_objective(self, value: float) -> float:
        return self.post_solve.apply(value) if self.post_solve else value

    def project(self, assignment: dict, original: Model) -> dict:
        """Map a solution of the rewritten model onto the original variables."""
        values = dict(assignment)
        if self.recovery is not None:
            values.update(self.recovery.apply(assignment))
        out = {}
        for name in original.var_names():
            if name not in values:
                raise ProjectionFailure(f"variable {name!r} has no value in the rewritten solution")
            out[name] = values[name]
        return out


# ---------------------------------------------------------------------------
# shared plumbing

class _Builder:
    """Collects replacements and auxiliaries, then assembles the new model."""

    def __init__(self, model: Model, kind: PatternKind):
        self.model = model
        self.kind = kind.value
        self.taken = set(model.var_names()) | {c.name for c in model.constraints}
        self.n = 0
        self.vars: list[VarDecl] = []
        self.cons: list[Constraint] = []
        self.big_m: list[BigMDerivation] = []
        self.notes: list[str] = []
        self.subs: dict = defaultdict(list)
        self.splits: dict = {}

    def group(self, nvars: int):
        """Reserve ``nvars`` fresh variable names; return them with the group index."""
        while True:
            names = [f"_aux_{self.kind}_{self.n + i}" for i in range(max(nvars, 1))]
            if not any(n in self.taken for n in names) and not any(
                c.startswith(f"_lin_{self.kind}_{self.n}_") for c in self.taken
            ):
                break
            self.n += 1
        gid = self.n
        self.n += max(nvars, 1)
        names = names[:nvars]
        self.taken.update(names)
        return names, gid

    def var(self, name, domain=Domain.CONTINUOUS, lower=0.0, upper=math.inf) -> Var:
        self.vars.append(VarDecl(name, domain, lower, upper))
        return Var(name)

    def con(self, gid: int, lhs: Expr, rel: Rel, rhs: float = 0.0) -> str:
        name = f"_lin_{self.kind}_{gid}_{sum(1 for c in self.cons if c.name.startswith(f'_lin_{self.kind}_{gid}_'))}"
        self.taken.add(name)
        self.cons.append(Constraint(name, normalize(lhs), rel, Const(float(rhs))))
        return name

    def replace(self, inst: PatternInstance, expr: Expr) -> None:
        self.subs[(inst.path.location, inst.path.side)].append((inst.path.chain, expr))

    def _apply(self, key, e):
        for chain, new in self.subs.get(key, ()):
            e = replace_at(e, chain, new)
        return normalize(e)

    def result(self, **extra) -> RewriteResult:
        m = self.model
        constraints = []
        for c in m.constraints:
            if c.name in self.splits:
                constraints.extend(self.splits[c.name])
                continue
            constraints.append(Constraint(c.name, self._apply((c.name, "lhs"), c.lhs), c.rel, self._apply((c.name, "rhs"), c.rhs)))
        constraints.extend(self.cons)
        split_names = [s.name for group in self.splits.values() for s in group]
        model = m.with_(
            vars=m.vars + tuple(self.vars),
            objective=self._apply(("objective", None), m.objective),
            constraints=tuple(constraints),
        )
        return RewriteResult(
            model,
            aux_vars=list(self.vars),
            aux_constraints=split_names + [c.name for c in self.cons],
            big_m=list(self.big_m),
            notes=list(self.notes),
            **extra,
        )


def _finite_interval(e: Expr, model: Model) -> Interval:
    return interval_of(e, model, require_finite=True)


def _key(args) -> tuple:
    return tuple(sorted(repr(a) for a in args))


def _check(instances, kinds) -> list:
    if isinstance(instances, PatternInstance):
        instances = [instances]
    for inst in instances:
        if inst.kind not in kinds:
            raise ValueError(f"expected {', '.join(k.value for k in kinds)} instances, got {inst.kind.value}")
    return list(instances)


# ---------------------------------------------------------------------------
# bilinear

def rewrite_bilinear(model: Model, instances) -> RewriteResult:
    """Replace every product ``f0 * f1`` (at least one binary per monomial pair)."""
    instances = _check(instances, (PatternKind.BILINEAR,))
    model = model.normalized()
    b = _Builder(model, PatternKind.BILINEAR)
    decls = model.var_map()
    params = model.param_values()
    shared: dict = {}

    def pair(u: str, v: str) -> Expr:
        if u == v:
            return Var(u)  # b*b = b for binary b
        key = tuple(sorted((u, v)))
        if key in shared:
            return shared[key]
        du, dv = decls[u], decls[v]
        (name,), gid = b.group(1)
        if du.is_binary and dv.is_binary:
            w = b.var(name, lower=0.0, upper=1.0)
            b1, b2 = Var(key[0]), Var(key[1])
            b.con(gid, w - b1, Rel.LE)
            b.con(gid, w - b2, Rel.LE)
            b.con(gid, w - b1 - b2, Rel.GE, -1.0)
        else:
            bin_, x = (du, dv) if du.is_binary else (dv, du)
            lo, hi = x.lower, x.upper
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise UnboundedInterval(f"{x.name} needs finite bounds for the product with {bin_.name}")
            z = b.var(name, lower=min(0.0, lo), upper=max(0.0, hi))
            bv, xv = Var(bin_.name), Var(x.name)
            b.con(gid, z - hi * bv, Rel.LE)
            b.con(gid, z - lo * bv, Rel.GE)
            c3 = b.con(gid, z - xv - lo * bv, Rel.LE, -lo)
            b.con(gid, z - xv - hi * bv, Rel.GE, -hi)
            b.big_m.append(BigMDerivation(c3, max(abs(lo), abs(hi)), Interval(lo, hi)))
        shared[key] = Var(name)
        return shared[key]

    for inst in instances:
        node = resolve_path(model, inst.path)
        scale = 1.0
        for f in node.factors:
            if not has_vars(f):
                scale *= affine_form(f, params)[1]
        (c0, o0), (c1, o1) = (affine_form(f, params) for f in inst.args)
        terms: list[Expr] = [Const(o0 * o1)]
        terms += [Const(o0 * cv) * Var(v) for v, cv in c1.items()]
        terms += [Const(o1 * cu) * Var(u) for u, cu in c0.items()]
        for u, cu in c0.items():
            for v, cv in c1.items():
                terms.append(Const(cu * cv) * pair(u, v))
        b.replace(inst, Const(scale) * _sum(terms))
    return b.result()


def _sum(terms) -> Expr:
    terms = list(terms)
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


# ---------------------------------------------------------------------------
# min / max

def _binary_args(args, model: Model) -> bool:
    decls = model.var_map()
    return all(isinstance(a, Var) and decls[a.name].is_binary for a in args)


def rewrite_minmax(model: Model, instances) -> RewriteResult:
    """Split, epigraph/hypograph, AND/OR or disjunctive encoding per polarity."""
    instances = _check(instances, (PatternKind.MIN, PatternKind.MAX))
    kinds = {i.kind for i in instances}
    if len(kinds) > 1:
        first = _rewrite_minmax_kind(model, [i for i in instances if i.kind is PatternKind.MIN])
        rest = [i for i in detect_patterns(first.model) if i.kind is PatternKind.MAX]
        second = _rewrite_minmax_kind(first.model, rest)
        return RewriteResult(
            second.model,
            first.aux_vars + second.aux_vars,
            first.aux_constraints + second.aux_constraints,
            first.big_m + second.big_m,
            notes=first.notes + second.notes,
        )
    return _rewrite_minmax_kind(model, instances)


def _rewrite_minmax_kind(model: Model, instances) -> RewriteResult:
    model = model.normalized()
    if not instances:
        return RewriteResult(model)
    kind = instances[0].kind
    is_max = kind is PatternKind.MAX
    b = _Builder(model, kind)
    shared: dict = {}
    for inst in instances:
        args = inst.args
        if _binary_args(args, model):
            mode = "logic"
        elif inst.polarity is Polarity.CONSTRAINT_SPLIT:
            c = model.constraint(inst.path.location)
            _, gid = b.group(0)
            pieces = []
            for k, f in enumerate(args):
                side = c.lhs if inst.path.side == "lhs" else c.rhs
                new_side = normalize(replace_at(side, inst.path.chain, f))
                lhs, rhs = (new_side, c.rhs) if inst.path.side == "lhs" else (c.lhs, new_side)
                pieces.append(Constraint(f"_lin_{kind.value}_{gid}_{k}", lhs, c.rel, rhs))
            b.splits[c.name] = pieces
            continue
        elif inst.polarity is Polarity.BENIGN:
            mode = "convex"
        else:
            mode = "disjunctive"
        key = (mode, _key(args))
        if key not in shared:
            shared[key] = _minmax_aux(b, model, args, is_max, mode, inst)
        b.replace(inst, shared[key])
    return b.result()


def _minmax_aux(b: _Builder, model: Model, args, is_max: bool, mode: str, inst) -> Var:
    K = len(args)
    if mode == "logic":
        (name,), gid = b.group(1)
        z = b.var(name, lower=0.0, upper=1.0)
        if is_max:
            for a in args:
                b.con(gid, z - a, Rel.GE)
            b.con(gid, z - _sum(args), Rel.LE)
        else:
            for a in args:
                b.con(gid, z - a, Rel.LE)
            b.con(gid, z - _sum(args), Rel.GE, -(K - 1))
        return z
    if mode == "convex":
        ivs = [interval_of(a, model) for a in args]
        pick = max if is_max else min
        (name,), gid = b.group(1)
        z = b.var(name, lower=pick(i.lo for i in ivs), upper=pick(i.hi for i in ivs))
        for a in args:
            b.con(gid, z - a, Rel.GE if is_max else Rel.LE)
        return z
    ivs = [_finite_interval(a, model) for a in args]
    names, gid = b.group(1 + K)
    pick = max if is_max else min
    z = b.var(names[0], lower=pick(i.lo for i in ivs), upper=pick(i.hi for i in ivs))
    sel = [b.var(n, Domain.BINARY, 0.0, 1.0) for n in names[1:]]
    top = max(i.hi for i in ivs)
    bottom = min(i.lo for i in ivs)
    for a, iv, s in zip(args, ivs, sel):
        if is_max:
            m = top - iv.lo
            b.con(gid, z - a, Rel.GE)
            name = b.con(gid, z - a + m * s, Rel.LE, m)
            b.big_m.append(BigMDerivation(name, m, Interval(iv.lo, top)))
        else:
            m = iv.hi - bottom
            b.con(gid, z - a, Rel.LE)
            name = b.con(gid, z - a - m * s, Rel.GE, -m)
            b.big_m.append(BigMDerivation(name, m, Interval(bottom, iv.hi)))
    b.con(gid, _sum(sel), Rel.EQ, 1.0)
    b.notes.append(f"disjunction for {inst.kind.value} at {inst.path.render(model)}")
    return z


# ---------------------------------------------------------------------------
# absolute value

def rewrite_abs(model: Model, instances, encoding: str = "epigraph") -> RewriteResult:
    """``encoding`` picks the form used for benign occurrences: two inequalities
    (``"epigraph"``) or positive and negative parts (``"parts"``).  Occurrences
    without downward pressure always get the binary encoding."""
    if encoding not in ABS_ENCODINGS:
        raise ValueError(f"unknown abs encoding {encoding!r}")
    instances = _check(instances, (PatternKind.ABS,))
    model = model.normalized()
    b = _Builder(model, PatternKind.ABS)
    shared: dict = {}
    for inst in instances:
        (t,) = inst.args
        mode = encoding if inst.polarity is Polarity.BENIGN else "binary"
        key = (mode, repr(t))
        if key not in shared:
            shared[key] = _abs_aux(b, model, t, mode)
        b.replace(inst, shared[key])
    return b.result()


def _abs_aux(b: _Builder, model: Model, t: Expr, mode: str) -> Expr:
    iv = interval_of(t, model)
    if mode == "epigraph":
        (name,), gid = b.group(1)
        bound = max(abs(iv.lo), abs(iv.hi))
        y = b.var(name, lower=0.0, upper=bound)
        b.con(gid, y - t, Rel.GE)
        b.con(gid, y + t, Rel.GE)
        return y
    if mode == "parts":
        (pn, mn), gid = b.group(2)
        p = b.var(pn, lower=0.0, upper=max(iv.hi, 0.0))
        m = b.var(mn, lower=0.0, upper=max(-iv.lo, 0.0))
        b.con(gid, p - m - t, Rel.EQ)
        return p + m
    iv = _finite_interval(t, model)
    u = max(abs(iv.lo), abs(iv.hi))
    (yn, bn), gid = b.group(2)
    y = b.var(yn, lower=0.0, upper=u)
    beta = b.var(bn, Domain.BINARY, 0.0, 1.0)
    b.con(gid, y - t, Rel.GE)
    b.con(gid, y + t, Rel.GE)
    c = b.con(gid, y - t + 2 * u * beta, Rel.LE, 2 * u)
    b.con(gid, y + t - 2 * u * beta, Rel.LE)
    b.big_m.append(BigMDerivation(c, 2 * u, iv))
    return y


# ---------------------------------------------------------------------------
# linear-fractional (Charnes-Cooper)

def rewrite_fractional(model: Model, instance) -> RewriteResult:
    """Whole-model scaling ``y = tau * x`` with ``tau = 1 / den``."""
    instances = _check(instance, (PatternKind.LINEAR_FRACTIONAL,))
    if len(instances) != 1:
        _too_many()
    instance = instances[0]
    model = model.normalized()
    others = [i for i in detect_patterns(model) if i != instance]
    if others:
        raise FractionalNotIsolated("the fractional objective must be the only remaining nonlinearity")
    if instance.path.location != "objective":
        raise FractionalNotIsolated("a ratio inside a constraint cannot be scaled away")
    if model.has_integers():
        raise FractionalWithIntegers("the scaling transform requires a purely continuous model")
    params = model.param_values()
    hole = "\x00ratio"
    outer = affine_form(replace_at(model.objective, instance.path.chain, Var(hole)), params)
    if outer is None or set(outer[0]) != {hole}:
        raise FractionalNotIsolated("the objective must be c * ratio + constant")
    c, k = outer[0][hole], outer[1]
    num, den = (affine_form(a, params) for a in instance.args)
    d_iv = interval_of(instance.args[1], model)
    if not d_iv.lo > 0:
        raise DenominatorNotPositive(f"denominator range [{d_iv.lo}, {d_iv.hi}] is not strictly positive")

    # objective c * N/D + k == (c*N + k*D) / D
    n_coef = {v: c * a for v, a in num[0].items()}
    for v, a in den[0].items():
        n_coef[v] = n_coef.get(v, 0.0) + k * a
    n_off = c * num[1] + k * den[1]

    b = _Builder(model.with_(vars=(), constraints=()), PatternKind.LINEAR_FRACTIONAL)
    b.taken |= set(model.var_names()) | {con.name for con in model.constraints}
    names, gid = b.group(1 + len(model.vars))
    tau_lo = 1.0 / d_iv.hi if math.isfinite(d_iv.hi) else 0.0
    tau = b.var(names[0], lower=tau_lo, upper=1.0 / d_iv.lo)
    ys = {}
    mapping = []
    for decl, yname in zip(model.vars, names[1:]):
        lo = 0.0 if decl.lower >= 0 else -math.inf
        hi = 0.0 if decl.upper <= 0 else math.inf
        ys[decl.name] = b.var(yname, lower=lo, upper=hi)
        mapping.append((decl.name, yname))
    for decl in model.vars:
        y = ys[decl.name]
        if math.isfinite(decl.lower) and decl.lower != 0:
            b.con(gid, y - decl.lower * tau, Rel.GE)
        if math.isfinite(decl.upper) and decl.upper != 0:
            b.con(gid, y - decl.upper * tau, Rel.LE)

    rows = []
    for r in constraint_rows(model):
        lhs = _sum([Const(a) * ys[v] for v, a in r.coeffs.items()] + [Const(-r.rhs) * tau])
        rows.append(Constraint(r.name, normalize(lhs), r.rel, Const(0.0)))
    norm = _sum([Const(a) * ys[v] for v, a in den[0].items()] + [Const(den[1]) * tau])
    b.con(gid, norm, Rel.EQ, 1.0)
    objective = normalize(_sum([Const(a) * ys[v] for v, a in n_coef.items()] + [Const(n_off) * tau]))

    new = model.with_(vars=tuple(b.vars), objective=objective, constraints=tuple(rows) + tuple(b.cons))
    recovery = Recovery(names[0], tuple(mapping))
    return RewriteResult(
        new,
        aux_vars=list(b.vars),
        aux_constraints=[con.name for con in b.cons],
        recovery=recovery,
        notes=[f"recover x = y / {names[0]}"],
    )


def _too_many():
    raise FractionalNotIsolated("only one ratio objective can be scaled away")


# ---------------------------------------------------------------------------
# monotone transformations

_INVERSE = {
    "exp": (lambda a: math.log(a), lambda a: a > 0),
    "log": (lambda a: math.exp(a), lambda a: True),
    "sqrt": (lambda a: a * a, lambda a: a >= 0),
}


def rewrite_monotone(model: Model, instances) -> RewriteResult:
    """Peel ``phi(g)`` off the objective, or invert ``phi(g) rel const``."""
    instances = _check(instances, (PatternKind.MONOTONE,))
    model = model.normalized()
    post = None
    objective = model.objective
    replaced = {}
    for inst in instances:
        (g,) = inst.args
        if affine_form(g, model.param_values()) is None:
            raise NonAffineArg(f"{inst.fn} argument is not affine")
        if inst.path.location == "objective":
            objective = g
            post = PostSolve(inst.fn, "increasing")
            continue
        c = model.constraint(inst.path.location)
        other = c.rhs if inst.path.side == "lhs" else c.lhs
        alpha = affine_form(other, model.param_values())[1]
        inverse, in_range = _INVERSE[inst.fn]
        if not in_range(alpha):
            raise NonInvertibleOnRange(f"{inst.fn} never takes the value {alpha} ({c.name})")
        bound = Const(inverse(alpha))
        if inst.path.side == "lhs":
            replaced[c.name] = Constraint(c.name, g, c.rel, bound)
        else:
            replaced[c.name] = Constraint(c.name, bound, c.rel, g)
    new = model.with_(
        objective=objective,
        constraints=tuple(replaced.get(c.name, c) for c in model.constraints),
    )
    notes = [f"objective reported as {post.fn}(value)"] if post else []
    return RewriteResult(new, post_solve=post, notes=notes)


# ---------------------------------------------------------------------------
# fixpoint driver

def _apply(kind: PatternKind, model: Model, instances) -> RewriteResult:
    if kind is PatternKind.BILINEAR:
        return rewrite_bilinear(model, instances)
    if kind in (PatternKind.MIN, PatternKind.MAX):
        return rewrite_minmax(model, instances)
    if kind is PatternKind.ABS:
        return rewrite_abs(model, instances)
    if kind is PatternKind.MONOTONE:
        return rewrite_monotone(model, instances)
    if len(instances) != 1:
        _too_many()
    return rewrite_fractional(model, instances[0])


def choose_kind(kinds, order: str, rng: random.Random) -> PatternKind:
    ranked = [k for k in PRIORITY if k in kinds]
    if order == "fixed":
        return ranked[0]
    if order != "random":
        raise ValueError(f"unknown order {order!r}")
    pool = [k for k in ranked if k is not PatternKind.LINEAR_FRACTIONAL] or ranked
    return rng.choice(pool)


def run_fixpoint(model: Model, order: str = "fixed", seed: int = 0) -> tuple[Model, RewriteTrace]:
    """Rewrite until no pattern kind applies; return the linear model and its trace."""
    original, model = model, model.normalized()
    rng = random.Random(seed)
    trace = RewriteTrace()
    done: list[PatternKind] = []
    for t in range(MAX_ITERATIONS):
        instances = detect_patterns(model)
        if not instances:
            return (model if trace.iterations else original), trace
        kind = choose_kind({i.kind for i in instances}, order, rng)
        chosen = [i for i in instances if i.kind is kind]
        res = _apply(kind, model, chosen)
        left = applicable_kinds(res.model)
        if kind in left or left & set(done):
            raise NonTermination(f"iteration {t} ({kind.value}) did not eliminate its pattern kind")
        done.append(kind)
        trace.iterations.append(
            Iteration(t, kind, len(chosen), res.aux_vars, res.aux_constraints, res.big_m, res.notes)
        )
        if res.post_solve is not None:
            trace.post_solve = res.post_solve
        if res.recovery is not None:
            trace.recovery = res.recovery
        model = res.model
    if detect_patterns(model):
        raise NonTermination(f"still nonlinear after {MAX_ITERATIONS} iterations")
    return model, trace
