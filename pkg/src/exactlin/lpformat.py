"""CPLEX LP text output, plus a small reader for the subset we emit."""

from __future__ import annotations

import math
import re

from .errors import ExactlinError
from .ir import Const, Prod, Sum, Var
from .linear import constraint_rows, objective_form
from .model import Constraint, Domain, Model, Rel, Sense, VarDecl

_WRAP = 200


def _num(v: float) -> str:
    return f"{v + 0.0:.12g}"


def _linear_text(coeffs: dict, order: list[str], const: float = 0.0) -> list[str]:
    parts = []
    for name in order:
        c = coeffs.get(name)
        if not c:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = name if mag == 1 else f"{_num(mag)} {name}"
        parts.append(f"{sign} {body}")
    if const:
        parts.append(f"{'-' if const < 0 else '+'} {_num(abs(const))}")
    if not parts:
        parts.append(f"0 {order[0]}" if order else "0")
    elif parts[0].startswith("+ "):
        parts[0] = parts[0][2:]
    return parts


def _wrap(head: str, parts: list[str]) -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + len(p) + 1 > _WRAP and cur.strip():
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def emit_lp(model: Model) -> str:
    """Render a linear model in CPLEX LP format. Raises NotLinear otherwise."""
    obj, offset = objective_form(model)
    rows = constraint_rows(model)
    order = model.var_names()
    out = ["\\ exactlin LP export", "Maximize" if model.sense is Sense.MAXIMIZE else "Minimize"]
    out += _wrap(" obj:", _linear_text(obj, order, offset))
    out.append("Subject To")
    for r in rows:
        parts = _linear_text(r.coeffs, order) + [r.rel.value, _num(r.rhs)]
        out += _wrap(f" {r.name}:", parts)
    out.append("Bounds")
    for v in model.vars:
        lo, hi = v.lower, v.upper
        if lo == -math.inf and hi == math.inf:
            out.append(f" {v.name} free")
        elif lo == hi:
            out.append(f" {v.name} = {_num(lo)}")
        elif hi == math.inf:
            out.append(f" {v.name} >= {_num(lo)}")
        elif lo == -math.inf:
            out.append(f" -inf <= {v.name} <= {_num(hi)}")
        else:
            out.append(f" {_num(lo)} <= {v.name} <= {_num(hi)}")
    binaries = [v.name for v in model.vars if v.domain is Domain.BINARY]
    generals = [v.name for v in model.vars if v.domain is Domain.INTEGER]
    if binaries:
        out.append("Binary")
        out += _wrap("", binaries)
    if generals:
        out.append("General")
        out += _wrap("", generals)
    out.append("End")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# reader

class LPReadError(ExactlinError):
    pass


_LP_TOKEN = re.compile(r"\s*(?:(<=|>=|=<|=>|=|[+\-:])|((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|([A-Za-z_!\"#$%&()/,.;?@`'{}|~][A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~]*))")
_SECTIONS = {
    "minimize": "min", "minimum": "min", "min": "min",
    "maximize": "max", "maximum": "max", "max": "max",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binary": "bin", "binaries": "bin", "bin": "bin",
    "general": "gen", "generals": "gen", "gen": "gen",
    "end": "end",
}


def _tokens(text: str):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _LP_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise LPReadError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        op, num, name = m.groups()
        if op:
            out.append(("op", {"=<": "<=", "=>": ">="}.get(op, op)))
        elif num:
            out.append(("num", float(num)))
        else:
            low = name.lower()
            if low in ("inf", "infinity"):
                out.append(("num", math.inf))
            else:
                out.append(("name", name))
        pos = m.end()
    return out


def _parse_linear(toks, i):
    """Parse ``[sign] [num] name ...`` until a relation; return (coeffs, const, i)."""
    coeffs: dict[str, float] = {}
    const = 0.0
    while i < len(toks) and not (toks[i][0] == "op" and toks[i][1] in ("<=", ">=", "=")):
        sign = 1.0
        while i < len(toks) and toks[i] in (("op", "+"), ("op", "-")):
            if toks[i][1] == "-":
                sign = -sign
            i += 1
        coef = 1.0
        if i < len(toks) and toks[i][0] == "num":
            coef = toks[i][1]
            i += 1
            if i >= len(toks) or toks[i][0] != "name":
                const += sign * coef
                continue
        if i >= len(toks) or toks[i][0] != "name":
            raise LPReadError("expected a variable name")
        name = toks[i][1]
        coeffs[name] = coeffs.get(name, 0.0) + sign * coef
        i += 1
    return coeffs, const, i


def _sections(text: str):
    current, buf = None, []
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTIONS.get(line.lower())
        if key is not None:
            if current is not None:
                yield current, buf
            current, buf = key, []
            if key == "end":
                break
        else:
            if current is None:
                raise LPReadError(f"text before first section: {line!r}")
            buf.append(line)
    if current is not None and current != "end":
        yield current, buf


def _split_labelled(lines: list[str]) -> list[tuple[str | None, list]]:
    """Group tokens into labelled statements (``name: ...``)."""
    toks = _tokens(" ".join(lines))
    groups: list[tuple[str | None, list]] = []
    i = 0
    while i < len(toks):
        if i + 1 < len(toks) and toks[i][0] == "name" and toks[i + 1] == ("op", ":"):
            groups.append((toks[i][1], []))
            i += 2
            continue
        if not groups:
            groups.append((None, []))
        groups[-1][1].append(toks[i])
        i += 1
    return groups


def _linear_expr(coeffs: dict, const: float = 0.0):
    terms = [Prod((Const(c), Var(n))) if c != 1 else Var(n) for n, c in coeffs.items() if c != 0]
    if const:
        terms.append(Const(const))
    if not terms:
        return Const(0.0)
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


def read_lp(text: str) -> Model:
    """Read the CPLEX LP subset written by :func:`emit_lp` back into a Model."""
    sense = None
    objective = None
    rows: list[Constraint] = []
    bounds: dict[str, list[float]] = {}
    order: list[str] = []
    domains: dict[str, Domain] = {}
    listed: list[str] = []

    def touch(name):
        if name not in bounds:
            bounds[name] = [0.0, math.inf]
            order.append(name)

    for section, lines in _sections(text):
        if section in ("min", "max"):
            sense = Sense.MINIMIZE if section == "min" else Sense.MAXIMIZE
            groups = _split_labelled(lines)
            toks = [t for _, g in groups for t in g]
            coeffs, const, i = _parse_linear(toks, 0)
            if i != len(toks):
                raise LPReadError("relation in objective")
            for n in coeffs:
                touch(n)
            objective = _linear_expr(coeffs, const)
        elif section == "st":
            for label, toks in _split_labelled(lines):
                coeffs, const, i = _parse_linear(toks, 0)
                if i >= len(toks):
                    raise LPReadError(f"constraint {label} has no relation")
                rel = Rel(toks[i][1])
                rest = toks[i + 1:]
                sign = 1.0
                if rest and rest[0] in (("op", "-"), ("op", "+")):
                    sign = -1.0 if rest[0][1] == "-" else 1.0
                    rest = rest[1:]
                if len(rest) != 1 or rest[0][0] != "num":
                    raise LPReadError(f"constraint {label}: bad right-hand side")
                for n in coeffs:
                    touch(n)
                rows.append(Constraint(label or f"r{len(rows)}", _linear_expr(coeffs), rel, Const(sign * rest[0][1] - const)))
        elif section == "bounds":
            for line in lines:
                listed.append(_read_bound(line, bounds, touch))
        elif section in ("bin", "gen"):
            for line in lines:
                for name in line.split():
                    touch(name)
                    if section == "bin":
                        domains[name] = Domain.BINARY
                        bounds[name] = [max(bounds[name][0], 0.0), min(bounds[name][1], 1.0)]
                    else:
                        domains[name] = Domain.INTEGER
    if sense is None:
        raise LPReadError("no objective section")
    seen = dict.fromkeys(listed)
    order = list(seen) + [n for n in order if n not in seen]
    decls = tuple(VarDecl(n, domains.get(n, Domain.CONTINUOUS), bounds[n][0], bounds[n][1]) for n in order)
    return Model(vars=decls, sense=sense, objective=objective, constraints=tuple(rows))


def _read_bound(line: str, bounds: dict, touch) -> str:
    toks = _tokens(line)

    def signed(ts):
        sign = 1.0
        while ts and ts[0][0] == "op" and ts[0][1] in "+-":
            sign = -sign if ts[0][1] == "-" else sign
            ts = ts[1:]
        if len(ts) != 1 or ts[0][0] != "num":
            raise LPReadError(f"bad bound line {line!r}")
        return sign * ts[0][1]

    names = [t[1] for t in toks if t[0] == "name"]
    if len(names) == 2 and names[1].lower() == "free":
        touch(names[0])
        bounds[names[0]] = [-math.inf, math.inf]
        return names[0]
    if len(names) != 1:
        raise LPReadError(f"bad bound line {line!r}")
    name = names[0]
    touch(name)
    idx = next(i for i, t in enumerate(toks) if t[0] == "name")
    rels = [i for i, t in enumerate(toks) if t[0] == "op" and t[1] in ("<=", ">=", "=")]
    if len(rels) == 2:
        lo = signed(toks[: rels[0]])
        hi = signed(toks[rels[1] + 1:])
        bounds[name] = [lo, hi]
        return name
    if len(rels) != 1:
        raise LPReadError(f"bad bound line {line!r}")
    r = rels[0]
    op = toks[r][1]
    if r > idx:
        value = signed(toks[r + 1:])
    else:
        value = signed(toks[:r])
        op = {"<=": ">=", ">=": "<=", "=": "="}[op]
    if op == "=":
        bounds[name] = [value, value]
    elif op == ">=":
        bounds[name][0] = value
    else:
        bounds[name][1] = value
    return name
