"""Model container: declarations, parameters, objective and named constraints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import ModelError
from .ir import Expr, Param, Var, normalize, walk


class Domain(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Rel(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="

    def flipped(self) -> "Rel":
        return {Rel.LE: Rel.GE, Rel.GE: Rel.LE, Rel.EQ: Rel.EQ}[self]


@dataclass(frozen=True)
class VarDecl:
    name: str
    domain: Domain = Domain.CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ModelError(f"variable {self.name}: lower bound {self.lower} exceeds upper {self.upper}")
        if self.domain is Domain.BINARY and (self.lower < 0 or self.upper > 1):
            raise ModelError(f"binary variable {self.name} has bounds outside [0,1]")

    @property
    def is_integral(self) -> bool:
        return self.domain is not Domain.CONTINUOUS

    @property
    def is_binary(self) -> bool:
        return self.domain is Domain.BINARY


def binary(name: str) -> VarDecl:
    return VarDecl(name, Domain.BINARY, 0.0, 1.0)


def continuous(name: str, lower: float = 0.0, upper: float = math.inf) -> VarDecl:
    return VarDecl(name, Domain.CONTINUOUS, float(lower), float(upper))


def integer(name: str, lower: float = 0.0, upper: float = math.inf) -> VarDecl:
    return VarDecl(name, Domain.INTEGER, float(lower), float(upper))


@dataclass(frozen=True)
class ParamBinding:
    name: str
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ModelError(f"parameter {self.name} must be finite")


@dataclass(frozen=True)
class Constraint:
    name: str
    lhs: Expr
    rel: Rel
    rhs: Expr


@dataclass(frozen=True)
class Model:
    vars: tuple = ()
    params: tuple = ()
    sense: Sense = Sense.MINIMIZE
    objective: Expr = field(default=None)
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    # lookups -------------------------------------------------------------
    def var_map(self) -> dict[str, VarDecl]:
        return {v.name: v for v in self.vars}

    def var_names(self) -> list[str]:
        return [v.name for v in self.vars]

    def param_values(self) -> dict[str, float]:
        return {p.name: p.value for p in self.params}

    def constraint(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def expressions(self):
        """Yield ``(location, side, expr)`` for the objective and every constraint side."""
        yield "objective", None, self.objective
        for c in self.constraints:
            yield c.name, "lhs", c.lhs
            yield c.name, "rhs", c.rhs

    def binaries(self) -> list[str]:
        return [v.name for v in self.vars if v.is_binary]

    def has_integers(self) -> bool:
        return any(v.is_integral for v in self.vars)

    # derived models ------------------------------------------------------
    def normalized(self) -> "Model":
        p = self.param_values()
        return replace(
            self,
            objective=normalize(self.objective, p),
            constraints=tuple(
                replace(c, lhs=normalize(c.lhs, p), rhs=normalize(c.rhs, p)) for c in self.constraints
            ),
        )

    def with_(self, **changes) -> "Model":
        return replace(self, **changes)

    def validate(self) -> "Model":
        """Check the cross-reference invariants; return self for chaining."""
        if self.objective is None:
            raise ModelError("model has no objective")
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            raise ModelError("duplicate variable declaration")
        pnames = [p.name for p in self.params]
        if len(set(pnames)) != len(pnames):
            raise ModelError("duplicate parameter")
        if set(names) & set(pnames):
            raise ModelError("parameter and variable share a name")
        cnames = [c.name for c in self.constraints]
        if len(set(cnames)) != len(cnames):
            raise ModelError("duplicate constraint name")
        vs, ps = set(names), set(pnames)
        for loc, _side, e in self.expressions():
            for node in walk(e):
                if isinstance(node, Var) and node.name not in vs:
                    raise ModelError(f"{loc}: unknown variable {node.name!r}")
                if isinstance(node, Param) and node.name not in ps:
                    raise ModelError(f"{loc}: unknown parameter {node.name!r}")
        return self
