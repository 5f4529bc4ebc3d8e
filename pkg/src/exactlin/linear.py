"""Extraction of coefficient rows from a model whose expressions are all affine."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotLinear
from .ir import Expr, Prod, Sum, affine_form, child_label, has_vars
from .model import Model, Rel


@dataclass
class Row:
    name: str
    coeffs: dict
    rel: Rel
    rhs: float


def first_nonlinear(e: Expr, path: str) -> str | None:
    """Path of the outermost non-affine subexpression, or None if ``e`` is affine."""
    if affine_form(e) is not None:
        return None
    if isinstance(e, Sum):
        for i, t in enumerate(e.terms):
            hit = first_nonlinear(t, f"{path}.{child_label(e, i)}")
            if hit:
                return hit
    if isinstance(e, Prod):
        bearing = [i for i, f in enumerate(e.factors) if has_vars(f)]
        if len(bearing) == 1:
            i = bearing[0]
            return first_nonlinear(e.factors[i], f"{path}.{child_label(e, i)}") or path
    return path


def objective_form(model: Model) -> tuple[dict, float]:
    form = affine_form(model.objective, model.param_values())
    if form is None:
        raise NotLinear(first_nonlinear(model.objective, "objective") or "objective")
    return form


def constraint_rows(model: Model) -> list[Row]:
    """One row ``sum(coeffs) rel rhs`` per constraint (everything moved left)."""
    params = model.param_values()
    rows = []
    for c in model.constraints:
        lhs = affine_form(c.lhs, params)
        if lhs is None:
            raise NotLinear(first_nonlinear(c.lhs, f"{c.name}.lhs") or c.name)
        rhs = affine_form(c.rhs, params)
        if rhs is None:
            raise NotLinear(first_nonlinear(c.rhs, f"{c.name}.rhs") or c.name)
        coeffs = dict(lhs[0])
        for k, v in rhs[0].items():
            coeffs[k] = coeffs.get(k, 0.0) - v
        coeffs = {k: v for k, v in coeffs.items() if v != 0}
        rows.append(Row(c.name, coeffs, c.rel, rhs[1] - lhs[1] + 0.0))
    return rows


def is_linear(model: Model) -> bool:
    try:
        objective_form(model)
        constraint_rows(model)
    except NotLinear:
        return False
    return True
