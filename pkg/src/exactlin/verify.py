"""Equivalence check of a rewritten model against the reference optimizer."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError
from .ir import evaluate
from .linear import is_linear
from .model import Model, Rel
from .oracle import oracle_solve
from .rewrite import RewriteTrace
from .solver import Solution, solve_milp

DEFAULT_TOL = 1e-4
FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class VerifyReport:
    oracle_obj: float | None
    reformulated_obj: float | None
    recovered_obj: float | None
    abs_gap: float | None
    projected_feasible: bool
    osr_pass: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def is_feasible(model: Model, point: dict, tol: float = FEASIBILITY_TOL) -> bool:
    """Whether ``point`` satisfies bounds, integrality and constraints of ``model``."""
    params = model.param_values()
    for v in model.vars:
        x = point[v.name]
        if x < v.lower - tol * max(1.0, abs(v.lower)) or x > v.upper + tol * max(1.0, abs(v.upper)):
            return False
        if v.is_integral and abs(x - round(x)) > tol:
            return False
    for c in model.constraints:
        try:
            lhs, rhs = evaluate(c.lhs, point, params), evaluate(c.rhs, point, params)
        except DomainError:
            return False
        slack = tol * max(1.0, abs(lhs), abs(rhs))
        if c.rel is Rel.LE and lhs > rhs + slack:
            return False
        if c.rel is Rel.GE and lhs < rhs - slack:
            return False
        if c.rel is Rel.EQ and abs(lhs - rhs) > slack:
            return False
    return True


def verify_equivalence(
    original: Model,
    reformulated: Model,
    trace: RewriteTrace,
    tol: float = DEFAULT_TOL,
    oracle: Solution | None = None,
) -> VerifyReport:
    """Solve ``reformulated``, map the answer back and compare with the oracle optimum."""
    if oracle is None:
        oracle = oracle_solve(original)
    if not is_linear(reformulated):
        return VerifyReport(oracle.objective, None, None, None, False, False)
    sol = solve_milp(reformulated)
    if not sol.optimal or not oracle.optimal:
        same = sol.status is oracle.status
        return VerifyReport(oracle.objective, sol.objective, None, 0.0 if same else None, same, same)
    recovered = trace.recover_objective(sol.objective)
    point = trace.project(sol.assignment, original)
    try:
        value = evaluate(original.objective, point, original.param_values())
        feasible = is_feasible(original, point) and _close(value, recovered, FEASIBILITY_TOL)
    except DomainError:
        feasible = False
    gap = abs(recovered - oracle.objective)
    if math.isnan(gap):
        gap = math.inf
    return VerifyReport(oracle.objective, sol.objective, recovered, gap, feasible, gap <= tol and feasible)
