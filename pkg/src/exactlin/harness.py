"""Corpus loading, benchmark metrics and random model generation."""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

from .detect import Path, PatternKind, applicable_kinds, detect_patterns
from .errors import ExactlinError, MetricsError
from .ir import (
    Abs, Const, Expr, Max, Min, Mono, Param, Prod, Quot, Sum, Var,
    children, evaluate, has_vars, interval_of, normalize,
)
from .linear import constraint_rows, objective_form
from .lpformat import emit_lp, read_lp
from .model import Constraint, Domain, Model, ParamBinding, Rel, Sense, VarDecl
from .nlm import parse_model
from .rewrite import run_fixpoint
from .solver import solve_milp
from .verify import DEFAULT_TOL, VerifyReport, verify_equivalence


@dataclass(frozen=True)
class InstanceAnnotation:
    expected_kinds: tuple
    source: str
    instance_id: str = ""
    planted: tuple = ()   # ((kind, path), ...) for generated models

    @classmethod
    def from_json(cls, text: str, instance_id: str = "") -> "InstanceAnnotation":
        d = json.loads(text)
        kinds = tuple(sorted(PatternKind(k) for k in d["expected_kinds"]))
        return cls(kinds, d.get("source", ""), instance_id)

    def to_json(self) -> str:
        d = {"expected_kinds": [k.value for k in self.expected_kinds], "source": self.source}
        if self.planted:
            d["planted"] = [list(p) for p in self.planted]
        return json.dumps(d, indent=2) + "\n"


# ---------------------------------------------------------------------------
# corpus

def corpus_dir():
    return resources.files("exactlin") / "corpus"


def load_corpus(directory=None) -> list[tuple[str, Model, InstanceAnnotation]]:
    """``(instance_id, model, annotation)`` for every ``.nlm`` file, sorted by id."""
    root = corpus_dir() if directory is None else FsPath(directory)
    entries = []
    for item in sorted(root.iterdir(), key=lambda p: p.name):
        if not item.name.endswith(".nlm"):
            continue
        iid = item.name[: -len(".nlm")]
        model = parse_model(item.read_text(encoding="utf-8"))
        ann_path = root / f"{iid}.ann.json"
        ann = InstanceAnnotation.from_json(ann_path.read_text(encoding="utf-8"), iid)
        entries.append((iid, model, ann))
    return entries


# ---------------------------------------------------------------------------
# per-instance evaluation

@dataclass
class InstanceResult:
    instance_id: str
    detected_kinds: tuple = ()
    reformulate_ok: bool = False
    emit_ok: bool = False
    osr_pass: bool = False
    runtime_ms: float = 0.0
    error: str | None = None
    verify: VerifyReport | None = None


def _close(a: float, b: float, tol: float = 1e-9) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _same_rows(a: dict, b: dict) -> bool:
    keys = set(a) | set(b)
    return all(_close(a.get(k, 0.0), b.get(k, 0.0)) for k in keys)


def lp_roundtrip_ok(model: Model) -> bool:
    """Emit ``model`` as LP text, read it back and compare the coefficient data."""
    back = read_lp(emit_lp(model))
    if back.sense is not model.sense or back.var_names() != model.var_names():
        return False
    for u, v in zip(model.vars, back.vars):
        if u.domain is not v.domain or not (_close(u.lower, v.lower) and _close(u.upper, v.upper)):
            return False
    (c1, o1), (c2, o2) = objective_form(model), objective_form(back)
    if not (_same_rows(c1, c2) and _close(o1, o2)):
        return False
    r1, r2 = constraint_rows(model), constraint_rows(back)
    if len(r1) != len(r2):
        return False
    return all(
        x.name == y.name and x.rel is y.rel and _close(x.rhs, y.rhs) and _same_rows(x.coeffs, y.coeffs)
        for x, y in zip(r1, r2)
    )


def run_instance(instance_id: str, model: Model, tol: float = DEFAULT_TOL, order: str = "fixed", seed: int = 0) -> InstanceResult:
    res = InstanceResult(instance_id)
    start = time.perf_counter()
    try:
        res.detected_kinds = tuple(sorted(applicable_kinds(model)))
        linear, trace = run_fixpoint(model, order, seed)
        text = emit_lp(linear)
        res.emit_ok = lp_roundtrip_ok(linear)
        res.reformulate_ok = bool(text) and solve_milp(linear).optimal
        res.verify = verify_equivalence(model, linear, trace, tol)
        res.osr_pass = res.verify.osr_pass
    except ExactlinError as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    res.runtime_ms = (time.perf_counter() - start) * 1000.0
    return res


# ---------------------------------------------------------------------------
# metrics

@dataclass
class BenchReport:
    instances: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(v == 100.0 for v in self.aggregates.values())

    def to_dict(self, timings: bool = False) -> dict:
        rows = []
        for row in self.instances:
            row = dict(row)
            if not timings:
                row.pop("runtime_ms", None)
            rows.append(row)
        return {"instances": rows, "aggregates": dict(self.aggregates)}

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2) + "\n"


def _pct(flags: list) -> float:
    return round(100.0 * sum(flags) / len(flags), 6)


def compute_metrics(results: list, annotations: list) -> BenchReport:
    """DSR, RSR, CSR and OSR over aligned per-instance results."""
    if not results:
        raise MetricsError("no results to aggregate")
    if len(results) != len(annotations):
        raise MetricsError(f"{len(results)} results but {len(annotations)} annotations")
    rows = []
    for r, a in sorted(zip(results, annotations), key=lambda p: p[0].instance_id):
        if a.instance_id and a.instance_id != r.instance_id:
            raise MetricsError(f"result {r.instance_id!r} is paired with annotation {a.instance_id!r}")
        expected = sorted(k.value for k in a.expected_kinds)
        detected = sorted(k.value for k in r.detected_kinds)
        rows.append({
            "id": r.instance_id,
            "expected_kinds": expected,
            "detected_kinds": detected,
            "detect_ok": detected == expected,
            "reformulate_ok": r.reformulate_ok,
            "emit_ok": r.emit_ok,
            "osr_pass": r.osr_pass,
            "abs_gap": None if r.verify is None or r.verify.abs_gap is None else r.verify.abs_gap + 0.0,
            "error": r.error,
            "runtime_ms": round(r.runtime_ms, 3),
        })
    aggregates = {
        "dsr": _pct([row["detect_ok"] for row in rows]),
        "rsr": _pct([row["reformulate_ok"] for row in rows]),
        "csr": _pct([row["emit_ok"] for row in rows]),
        "osr": _pct([row["osr_pass"] for row in rows]),
    }
    return BenchReport(rows, aggregates)


def bench(directory=None, tol: float = DEFAULT_TOL, order: str = "fixed", seed: int = 0) -> BenchReport:
    entries = load_corpus(directory)
    results = [run_instance(iid, model, tol, order, seed) for iid, model, _ in entries]
    return compute_metrics(results, [ann for _, _, ann in entries])


# ---------------------------------------------------------------------------
# random models with planted patterns

_PLAIN = (PatternKind.BILINEAR, PatternKind.MIN, PatternKind.MAX, PatternKind.ABS)


def _validate_mix(mix: dict) -> dict:
    mix = {PatternKind(k): int(v) for k, v in mix.items() if int(v) > 0}
    frac = mix.get(PatternKind.LINEAR_FRACTIONAL, 0)
    if frac > 1 or (frac and len(mix) > 1):
        raise ValueError("a fractional objective can only be planted alone, once")
    if mix.get(PatternKind.MONOTONE, 0) > 1:
        raise ValueError("at most one monotone objective can be planted")
    return mix


def _random_mix(rng: random.Random) -> dict:
    if rng.random() < 0.15:
        return {PatternKind.LINEAR_FRACTIONAL: 1}
    pool = list(_PLAIN) + [PatternKind.MONOTONE]
    kinds = rng.sample(pool, rng.randint(1, 3))
    return {k: 1 if k is PatternKind.MONOTONE else rng.randint(1, 2) for k in kinds}


class _Gen:
    def __init__(self, rng: random.Random, mix: dict, index: int):
        self.rng = rng
        self.mix = mix
        self.frac = PatternKind.LINEAR_FRACTIONAL in mix
        self.index = index
        self.params: list[ParamBinding] = []
        self.used_pairs: set = set()
        self.seen: set = set()

    def build(self) -> tuple[Model, list]:
        rng = self.rng
        n = rng.randint(2, 4)
        nb = 0 if self.frac else rng.randint(2, 4)
        decls, point = [], {}
        for i in range(n):
            lo = 0 if self.frac else rng.randint(-5, 0)
            hi = lo + rng.randint(2, 10)
            decls.append(VarDecl(f"x{i}", Domain.CONTINUOUS, float(lo), float(hi)))
            point[f"x{i}"] = round(rng.uniform(lo, hi), 2)
        for i in range(nb):
            decls.append(VarDecl(f"b{i}", Domain.BINARY, 0.0, 1.0))
            point[f"b{i}"] = float(rng.randint(0, 1))
        self.decls = {d.name: d for d in decls}
        self.xs = [f"x{i}" for i in range(n)]
        self.bs = [f"b{i}" for i in range(nb)]
        self.point = point

        planted = []   # (kind, location, side, matcher)
        obj_terms: list[Expr] = []
        cons: list[Constraint] = []
        mono = PatternKind.MONOTONE in self.mix
        if self.frac:
            objective = self.fraction()
            planted.append((PatternKind.LINEAR_FRACTIONAL, "objective", None, _equal(normalize(objective))))
        elif mono:
            objective = self.monotone()
            planted.append((PatternKind.MONOTONE, "objective", None, _equal(normalize(objective, self.pvals()))))
        else:
            obj_terms.append(self.linear(self.xs + self.bs))
        for kind in _PLAIN:
            for _ in range(self.mix.get(kind, 0)):
                node, match = self.pattern(kind)
                coef = Const(float(rng.choice([-3, -2, -1, 1, 2, 3])))
                term = coef * node
                if not mono and rng.random() < 0.5:
                    obj_terms.append(term)
                    planted.append((kind, "objective", None, match))
                else:
                    name = f"g{len(cons)}"
                    cons.append(self.constraint(name, term + self.linear(self.xs[:2])))
                    planted.append((kind, name, "lhs", match))
        for _ in range(rng.randint(1, 3)):
            cons.append(self.constraint(f"c{len(cons)}", self.linear(self.xs + self.bs)))
        if not self.frac and not mono:
            objective = obj_terms[0] if len(obj_terms) == 1 else Sum(tuple(obj_terms))
        sense = rng.choice([Sense.MINIMIZE, Sense.MAXIMIZE])
        model = Model(tuple(decls), tuple(self.params), sense, objective, tuple(cons)).validate()
        return model, planted

    # building blocks -----------------------------------------------------
    def pvals(self) -> dict:
        return {p.name: p.value for p in self.params}

    def param(self) -> Param:
        name = f"p{len(self.params)}"
        self.params.append(ParamBinding(name, float(self.rng.choice([-4, -3, -2, -1, 1, 2, 3, 4]))))
        return Param(name)

    def linear(self, names) -> Expr:
        """Affine form whose coefficients are parameter products."""
        rng = self.rng
        chosen = rng.sample(names, min(len(names), rng.randint(1, 3)))
        terms = [Prod((Const(float(rng.randint(1, 3))), self.param(), Var(v))) for v in chosen]
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def affine(self, names=None, positive=False) -> Expr:
        rng = self.rng
        names = names or self.xs
        chosen = rng.sample(names, min(len(names), rng.randint(1, 2)))
        terms = []
        for v in chosen:
            c = rng.randint(1, 4) if positive else rng.choice([-4, -3, -2, -1, 1, 2, 3, 4])
            terms.append(Prod((Const(float(c)), Var(v))))
        terms.append(Const(float(rng.randint(-3, 3))))
        return Sum(tuple(terms))

    def constraint(self, name: str, lhs: Expr) -> Constraint:
        rng = self.rng
        value = evaluate(lhs, self.point, self.pvals())
        rel = rng.choice([Rel.LE, Rel.LE, Rel.GE, Rel.EQ])
        slack = float(rng.randint(0, 4))
        rhs = value + slack if rel is Rel.LE else value - slack if rel is Rel.GE else value
        return Constraint(name, lhs, rel, Const(round(rhs, 6)))

    def pattern(self, kind: PatternKind):
        rng = self.rng
        while True:
            if kind is PatternKind.BILINEAR:
                b = rng.choice(self.bs)
                other = rng.choice([v for v in self.xs + self.bs if v != b])
                key = frozenset((b, other))
                if key in self.used_pairs:
                    if len(self.used_pairs) >= len(self.bs) * (len(self.xs) + len(self.bs)):
                        raise ValueError("ran out of distinct products")
                    continue
                self.used_pairs.add(key)
                node = Prod((Var(b), Var(other)))
                factors = (Var(b), Var(other))
                return node, _factors(factors)
            if kind is PatternKind.ABS:
                node = Abs(self.affine())
            else:
                args = tuple(self.affine() for _ in range(rng.randint(2, 3)))
                node = (Min if kind is PatternKind.MIN else Max)(args)
            norm = normalize(node)
            if norm in self.seen or not has_vars(norm) or len(set(children(norm))) != len(children(norm)):
                continue
            self.seen.add(norm)
            return node, _equal(norm)

    def fraction(self) -> Expr:
        rng = self.rng
        num = self.affine()
        den_terms = [Prod((Const(float(rng.randint(0, 3))), Var(v))) for v in self.xs]
        den = Sum(tuple(den_terms) + (Const(0.01 + rng.randint(0, 3)),))
        if not has_vars(normalize(den)):
            den = Sum((Var(self.xs[0]), Const(0.01)))
        return Quot(num, den)

    def monotone(self) -> Expr:
        rng = self.rng
        fn = rng.choice(["exp", "log", "sqrt"])
        g = self.affine(self.xs + self.bs)
        probe = Model(tuple(self.decls.values()), (), Sense.MINIMIZE, Const(0.0))
        iv = interval_of(normalize(g), probe)
        if fn == "log":
            g = Sum((g, Const(1.0 - iv.lo)))
        elif fn == "sqrt":
            g = Sum((g, Const(-iv.lo)))
        elif max(abs(iv.lo), abs(iv.hi)) > 10:
            g = Prod((Const(10.0 / max(abs(iv.lo), abs(iv.hi))), g))
        return Mono(fn, g)


def _equal(target: Expr):
    return lambda node: node == target


def _factors(factors: tuple):
    def match(node):
        return isinstance(node, Prod) and tuple(f for f in node.factors if has_vars(f)) == factors
    return match


def _locate(root: Expr, match) -> list[tuple]:
    hits, stack = [], [(root, ())]
    while stack:
        node, chain = stack.pop()
        if match(node):
            hits.append(chain)
            continue
        for i, k in enumerate(children(node)):
            stack.append((k, chain + (i,)))
    return hits


def _planted_paths(model: Model, planted: list) -> tuple:
    norm = model.normalized()
    out = []
    for kind, loc, side, match in planted:
        root = norm.objective if loc == "objective" else getattr(norm.constraint(loc), side)
        chains = _locate(root, match)
        if len(chains) != 1:
            raise ValueError(f"planted {kind.value} at {loc} found {len(chains)} times")
        out.append((kind.value, Path(loc, side, chains[0]).render(norm)))
    return tuple(sorted(out))


def gen_models(seed: int, count: int, mix: dict | None = None) -> list[tuple[Model, InstanceAnnotation]]:
    """``count`` bounded, feasible models with a known set of planted patterns.

    ``mix`` maps kinds to the number of instances planted in every model; an
    empty mix gives pattern-free models and ``None`` draws a mix per model.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = random.Random(seed)
    out = []
    for i in range(count):
        chosen = _validate_mix(mix) if mix is not None else _random_mix(rng)
        model, planted = _Gen(rng, chosen, i).build()
        paths = _planted_paths(model, planted)
        kinds = tuple(sorted({PatternKind(k) for k, _ in paths}))
        ann = InstanceAnnotation(kinds, f"generated seed={seed} index={i}", f"gen{seed}_{i:04d}", paths)
        out.append((model, ann))
    return out


def detected_paths(model: Model) -> tuple:
    norm = model.normalized()
    return tuple(sorted((i.kind.value, i.path.render(norm)) for i in detect_patterns(norm)))
