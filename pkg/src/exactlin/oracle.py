"""Reference optimizer for models that still contain their nonlinearities.

Nothing here uses the rewrite operators.  Binaries are enumerated, every
abs/min/max occurrence is resolved by enumerating which branch is active
(with the dominance constraints that make it so), and what is left is a
linear program, a ratio of affine functions (Dinkelbach) or a monotone
function of an affine objective.
"""

from __future__ import annotations

import itertools
import math

from .errors import NoConvergence, OracleScaleExceeded, UnsupportedNonlinearity
from .ir import (
    Abs, Const, Expr, Max, Min, Mono, Quot, Var,
    affine_form, children, evaluate, normalize, substitute, walk, with_children,
)
from .model import Constraint, Model, Rel, Sense
from .solver import Solution, SolveStatus, solve_lp, solve_milp

MAX_BINARIES = 12
MAX_ARGS = 4
DINKELBACH_TOL = 1e-10
DINKELBACH_MAX_ITER = 100


def _solve_linear(model: Model) -> Solution:
    return solve_milp(model) if model.has_integers() else solve_lp(model)


def _better(a: Solution, b: Solution | None, sense: Sense) -> bool:
    if b is None:
        return True
    return a.objective < b.objective if sense is Sense.MINIMIZE else a.objective > b.objective


# ---------------------------------------------------------------------------
# Dinkelbach

def _ratio_parts(model: Model):
    """Split an objective ``c * num/den + k`` into affine N and D (as dicts)."""
    params = model.param_values()
    quots = [n for n in walk(model.objective) if isinstance(n, Quot)]
    if len(quots) != 1:
        raise UnsupportedNonlinearity("objective", "expected exactly one ratio in the objective")
    (q,) = quots
    hole = "\x00q"
    outer = affine_form(_replace_nodes(model.objective, {q: Var(hole)}), params)
    num, den = affine_form(q.num, params), affine_form(q.den, params)
    if outer is None or set(outer[0]) - {hole} or num is None or den is None:
        raise UnsupportedNonlinearity("objective", "objective is not c * ratio + constant")
    c, k = outer[0].get(hole, 0.0), outer[1]
    n = {v: c * a for v, a in num[0].items()}
    for v, a in den[0].items():
        n[v] = n.get(v, 0.0) + k * a
    return (n, c * num[1] + k * den[1]), den


def _affine_expr(coeffs: dict, offset: float) -> Expr:
    return normalize(sum((Const(a) * Var(v) for v, a in coeffs.items()), Const(offset)))


def _value(form, x) -> float:
    coeffs, offset = form
    return math.fsum([offset] + [a * x[v] for v, a in coeffs.items()])


def dinkelbach(model: Model) -> Solution:
    """Optimize a single ratio objective over linear constraints by parametric iteration."""
    model = model.normalized()
    num, den = _ratio_parts(model)
    start = _solve_linear(model.with_(objective=Const(0.0)))
    if not start.optimal:
        return Solution(start.status)
    x = start.assignment
    lam = _value(num, x) / _value(den, x)
    for _ in range(DINKELBACH_MAX_ITER):
        coeffs = dict(num[0])
        for v, a in den[0].items():
            coeffs[v] = coeffs.get(v, 0.0) - lam * a
        sub = _solve_linear(model.with_(objective=_affine_expr(coeffs, num[1] - lam * den[1])))
        if not sub.optimal:
            return Solution(sub.status)
        x = sub.assignment
        n, d = _value(num, x), _value(den, x)
        gap = n - lam * d
        lam_next = n / d
        if abs(gap) <= DINKELBACH_TOL * max(1.0, abs(n), abs(lam * d)):
            return Solution(SolveStatus.OPTIMAL, lam_next, x)
        lam = lam_next
    raise NoConvergence(f"Dinkelbach did not converge in {DINKELBACH_MAX_ITER} iterations")


# ---------------------------------------------------------------------------
# case enumeration

def _replace_nodes(e: Expr, mapping: dict) -> Expr:
    if e in mapping:
        return mapping[e]
    kids = children(e)
    if not kids:
        return e
    return with_children(e, (_replace_nodes(k, mapping) for k in kids))


def _branch_nodes(model: Model) -> list:
    seen: dict = {}
    for _, _, e in model.expressions():
        for node in walk(e):
            if isinstance(node, (Abs, Min, Max)):
                if isinstance(node, (Min, Max)) and len(node.args) > MAX_ARGS:
                    raise OracleScaleExceeded(f"{type(node).__name__.lower()} with {len(node.args)} arguments")
                seen.setdefault(node)
    return list(seen)


def _branches(node):
    """Yield ``(replacement, [(lhs, rel, rhs), ...])`` for each active branch."""
    if isinstance(node, Abs):
        t = node.arg
        yield t, [(t, Rel.GE, Const(0.0))]
        yield normalize(-t), [(t, Rel.LE, Const(0.0))]
        return
    rel = Rel.LE if isinstance(node, Min) else Rel.GE
    for k, f in enumerate(node.args):
        yield f, [(f, rel, g) for j, g in enumerate(node.args) if j != k]


def _invert_mono(c: Constraint, name: str) -> list[Constraint] | None:
    """Rewrite ``phi(g) rel alpha`` as a bound on g; None means the row is infeasible."""
    if isinstance(c.lhs, Mono):
        mono, alpha, rel = c.lhs, c.rhs, c.rel
    else:
        mono, alpha, rel = c.rhs, c.lhs, c.rel.flipped()
    if not isinstance(alpha, Const):
        raise UnsupportedNonlinearity(name, "monotone side must be compared with a constant")
    a, g, fn = alpha.value, mono.arg, mono.fn
    domain = []
    if fn == "sqrt":
        domain = [Constraint(f"{name}#dom", g, Rel.GE, Const(0.0))]
    low = {"exp": 0.0, "sqrt": 0.0, "log": -math.inf}[fn]
    if a < low or (a == low and fn == "exp"):
        # alpha lies below the range of phi
        if rel is Rel.GE:
            return domain
        return None
    value = {"exp": lambda: math.log(a), "log": lambda: math.exp(a), "sqrt": lambda: a * a}[fn]()
    return domain + [Constraint(name, g, rel, Const(value))]


def _solve_case(model: Model) -> Solution:
    rows = []
    for c in model.constraints:
        if isinstance(c.lhs, Mono) or isinstance(c.rhs, Mono):
            inv = _invert_mono(c, c.name)
            if inv is None:
                return Solution(SolveStatus.INFEASIBLE)
            rows.extend(inv)
        else:
            rows.append(c)
    model = model.with_(constraints=tuple(rows))
    obj = model.objective
    if isinstance(obj, Mono):
        inner = _solve_linear(model.with_(objective=obj.arg))
        if not inner.optimal:
            return inner
        value = evaluate(obj, inner.assignment)
        return Solution(SolveStatus.OPTIMAL, value, inner.assignment)
    if any(isinstance(n, Quot) for n in walk(obj)):
        return dinkelbach(model)
    return _solve_linear(model)


def _solve_branches(model: Model) -> Solution:
    nodes = _branch_nodes(model)
    best, unbounded = None, False
    for combo in itertools.product(*(list(_branches(n)) for n in nodes)):
        mapping = {n: rep for n, (rep, _) in zip(nodes, combo)}
        extra = [
            Constraint(f"#case{i}_{j}", lhs, rel, rhs)
            for i, (_, rows) in enumerate(combo)
            for j, (lhs, rel, rhs) in enumerate(rows)
        ]
        case = model.with_(
            objective=normalize(_replace_nodes(model.objective, mapping)),
            constraints=tuple(
                Constraint(c.name, normalize(_replace_nodes(c.lhs, mapping)), c.rel, normalize(_replace_nodes(c.rhs, mapping)))
                for c in model.constraints
            ) + tuple(extra),
        )
        sol = _solve_case(case)
        if sol.status is SolveStatus.UNBOUNDED:
            unbounded = True
        elif sol.optimal and _better(sol, best, model.sense):
            best = sol
    if best is None:
        return Solution(SolveStatus.UNBOUNDED if unbounded else SolveStatus.INFEASIBLE)
    if unbounded:
        return Solution(SolveStatus.UNBOUNDED)
    return best


def oracle_solve(model: Model) -> Solution:
    """Global optimum of a (possibly nonlinear) model by exhaustive case analysis."""
    model = model.normalized()
    bins = model.binaries()
    if len(bins) > MAX_BINARIES:
        raise OracleScaleExceeded(f"{len(bins)} binaries exceed the enumeration limit of {MAX_BINARIES}")
    keep = tuple(v for v in model.vars if not v.is_binary)
    best, unbounded = None, False
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        fixed = dict(zip(bins, bits))
        mapping = {b: Const(v) for b, v in fixed.items()}
        p = model.param_values()
        sub = model.with_(
            vars=keep,
            objective=normalize(substitute(model.objective, mapping), p),
            constraints=tuple(
                Constraint(c.name, normalize(substitute(c.lhs, mapping), p), c.rel, normalize(substitute(c.rhs, mapping), p))
                for c in model.constraints
            ),
        )
        sol = _solve_fixed(sub)
        if sol.status is SolveStatus.UNBOUNDED:
            unbounded = True
        elif sol.optimal and _better(sol, best, model.sense):
            best = Solution(sol.status, sol.objective, {**fixed, **sol.assignment})
    if unbounded:
        return Solution(SolveStatus.UNBOUNDED)
    if best is None:
        return Solution(SolveStatus.INFEASIBLE)
    return best


def _solve_fixed(model: Model) -> Solution:
    # constraints that became constant after fixing binaries are checked directly
    rows = []
    for c in model.constraints:
        lhs, rhs = c.lhs, c.rhs
        if isinstance(lhs, Const) and isinstance(rhs, Const):
            if not _holds(lhs.value, c.rel, rhs.value):
                return Solution(SolveStatus.INFEASIBLE)
            continue
        rows.append(c)
    model = model.with_(constraints=tuple(rows))
    if not model.vars:
        return Solution(SolveStatus.OPTIMAL, evaluate(model.objective, {}), {})
    return _solve_branches(model)


def _holds(a: float, rel: Rel, b: float, tol: float = 1e-9) -> bool:
    scale = tol * max(1.0, abs(a), abs(b))
    if rel is Rel.LE:
        return a <= b + scale
    if rel is Rel.GE:
        return a >= b - scale
    return abs(a - b) <= scale
