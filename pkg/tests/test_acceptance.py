"""End-to-end acceptance checks, one block per criterion.

Each test records its outcome through the ``criterion`` fixture; the terminal
summary prints one PASS/FAIL line per criterion number.
"""

import itertools
import math
import random
import time
from collections import Counter

import numpy as np
import pytest

from exactlin.detect import PatternKind, Polarity, detect_patterns
from exactlin.harness import bench, gen_models, load_corpus
from exactlin.ir import Const, Mono, Neg, Prod, Sum, Var, evaluate
from exactlin.linear import is_linear
from exactlin.model import Constraint, Domain, Rel, Sense, VarDecl
from exactlin.nlm import parse_model, parse_model_diagnostics
from exactlin.oracle import dinkelbach, oracle_solve
from exactlin.rewrite import (
    RewriteTrace, rewrite_abs, rewrite_bilinear, rewrite_fractional, rewrite_minmax,
    rewrite_monotone, run_fixpoint,
)
from exactlin.solver import SolveStatus, solve_lp, solve_milp
from exactlin.verify import is_feasible, verify_equivalence

CORPUS_KIND_COUNTS = {"bilinear": 6, "min": 3, "max": 4, "abs": 4, "fractional": 3, "monotone": 2}


def _affine(rng, names, lo=-3, hi=3, const=5):
    terms = [f"{rng.randint(lo, hi)}*{n}" for n in names]
    return " + ".join(terms) + f" + {rng.randint(-const, const)}"


def _value(text_expr, point):
    # evaluate a generated affine string at a point without touching the package
    return eval(text_expr.replace("*", " * "), {}, dict(point))


def _box(rng, names, lo=(-5, 0), hi=(1, 6)):
    bounds = {n: (rng.randint(*lo), rng.randint(*hi)) for n in names}
    point = {n: rng.uniform(a, b) for n, (a, b) in bounds.items()}
    decl = "".join(f"var {n} continuous [{a}, {b}]\n" for n, (a, b) in bounds.items())
    return decl, point


def _linear_rows(rng, names, point, count):
    rows = []
    for k in range(count):
        lhs = " + ".join(f"{rng.randint(-4, 4)}*{n}" for n in names)
        rows.append(f"s.t. row{k}: {lhs} <= {round(_value(lhs, point) + rng.uniform(0, 3), 3)}\n")
    return "".join(rows)


def _gap_ok(a, b, tol):
    return abs(a - b) <= tol


# ---------------------------------------------------------------------------
# 1. bundled corpus

def test_corpus_metrics(criterion):
    with criterion(1, "corpus DSR=RSR=CSR=OSR=100% at tol 1e-4, runtime < 10 s"):
        counts = Counter(k.value for _, _, ann in load_corpus() for k in ann.expected_kinds)
        assert dict(counts) == CORPUS_KIND_COUNTS
        start = time.perf_counter()
        report = bench(tol=1e-4)
        elapsed = time.perf_counter() - start
        assert len(report.instances) == 20
        assert report.aggregates == {"dsr": 100.0, "rsr": 100.0, "csr": 100.0, "osr": 100.0}, report.to_json()
        assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 2. and 3. products with a binary factor

def _aux_range(model, aux, fixed):
    """LP minimum and maximum of ``aux`` with the variables in ``fixed`` pinned."""
    vars_ = tuple(
        VarDecl(v.name, Domain.CONTINUOUS, fixed[v.name], fixed[v.name]) if v.name in fixed else v
        for v in model.vars
    )
    pinned = model.with_(vars=vars_)
    lo = solve_lp(pinned.with_(objective=Var(aux), sense=Sense.MINIMIZE))
    hi = solve_lp(pinned.with_(objective=Var(aux), sense=Sense.MAXIMIZE))
    return lo, hi


def test_case_a_truth_table(criterion):
    with criterion(2, "binary x binary product: w unique and equal to b1*b2 on all 4 assignments"):
        m = parse_model("var b1 binary\nvar b2 binary\nminimize: b1*b2\n")
        res = rewrite_bilinear(m, detect_patterns(m))
        (w,) = res.aux_vars
        assert not w.is_integral
        for b1, b2 in itertools.product((0.0, 1.0), repeat=2):
            lo, hi = _aux_range(res.model, w.name, {"b1": b1, "b2": b2})
            assert lo.optimal and hi.optimal
            assert lo.objective == b1 * b2
            assert hi.objective == b1 * b2


def test_case_b_grid(criterion):
    with criterion(3, "binary x bounded product: min z = max z = b*x on 50 boxes x 21 points, gap <= 1e-9"):
        rng = random.Random(20240603)
        worst = 0.0
        for _ in range(50):
            L = rng.uniform(-50, 50)
            U = L + rng.uniform(0.01, 80)
            m = parse_model(f"var b binary\nvar x continuous [{L!r}, {U!r}]\nminimize: b*x\n")
            res = rewrite_bilinear(m, detect_patterns(m))
            (z,) = res.aux_vars
            for b in (0.0, 1.0):
                for x in np.linspace(L, U, 21):
                    lo, hi = _aux_range(res.model, z.name, {"b": b, "x": float(x)})
                    assert lo.optimal and hi.optimal
                    worst = max(worst, abs(lo.objective - b * x), abs(hi.objective - b * x))
        assert worst <= 1e-9, worst


# ---------------------------------------------------------------------------
# 4. min / max by polarity class

def _minmax_instance(rng, polarity):
    names = ["x0", "x1", "x2"]
    decl, point = _box(rng, names)
    fn = rng.choice(("min", "max"))
    args = [_affine(rng, names) for _ in range(rng.randint(2, 3))]
    call = f"{fn}({', '.join(args)})"
    at = (min if fn == "min" else max)(_value(a, point) for a in args)
    lin = _affine(rng, names, -1, 1, 0)
    rows = _linear_rows(rng, names, point, 2)
    good = "minimize" if fn == "max" else "maximize"
    bad = "maximize" if fn == "max" else "minimize"
    if polarity is Polarity.BENIGN:
        body = f"{good}: {call} + {lin}\n"
    elif polarity is Polarity.CONSTRAINT_SPLIT:
        rel = "<=" if fn == "max" else ">="
        slack = rng.uniform(0, 2) * (1 if fn == "max" else -1)
        body = f"{rng.choice(('minimize', 'maximize'))}: {lin}\ns.t. pat: {call} {rel} {round(at + slack, 3)}\n"
    elif rng.random() < 0.5:
        body = f"{bad}: {call} + {lin}\n"
    else:
        rel = ">=" if fn == "max" else "<="
        slack = rng.uniform(0, 2) * (-1 if fn == "max" else 1)
        body = f"{rng.choice(('minimize', 'maximize'))}: {lin}\ns.t. pat: {call} {rel} {round(at + slack, 3)}\n"
    return parse_model(decl + body + rows)


@pytest.mark.parametrize("polarity", list(Polarity))
def test_minmax_encodings(criterion, polarity):
    with criterion(4, "min/max encodings match branch enumeration on 100 instances per polarity, gap <= 1e-8"):
        rng = random.Random(f"minmax-{polarity.value}")
        for _ in range(100):
            m = _minmax_instance(rng, polarity)
            (inst,) = detect_patterns(m)
            assert inst.polarity is polarity
            res = rewrite_minmax(m, [inst])
            assert is_linear(res.model)
            got, want = solve_milp(res.model), oracle_solve(m)
            assert got.status is want.status
            if want.optimal:
                assert _gap_ok(got.objective, want.objective, 1e-8), (got.objective, want.objective)


# ---------------------------------------------------------------------------
# 5. absolute value

def _abs_instance(rng):
    names = ["x0", "x1", "x2"]
    decl, point = _box(rng, names)
    rows = _linear_rows(rng, names, point, 2)
    lin = _affine(rng, names, -1, 1, 0)
    if rng.random() < 0.6:
        terms = " + ".join(f"{rng.randint(1, 4)}*abs({_affine(rng, names)})" for _ in range(rng.randint(1, 2)))
        body = rng.choice((f"minimize: {terms} + {lin}\n", f"maximize: -1*({terms}) + {lin}\n"))
    else:
        arg = _affine(rng, names)
        body = f"{rng.choice(('minimize', 'maximize'))}: {lin}\ns.t. pat: abs({arg}) <= {round(abs(_value(arg, point)) + rng.uniform(0, 2), 3)}\n"
    return parse_model(decl + body + rows)


def test_abs_encodings(criterion):
    with criterion(5, "abs objective form and +/- parts form match the oracle on 100 instances, gap <= 1e-8"):
        rng = random.Random("abs")
        for _ in range(100):
            m = _abs_instance(rng)
            insts = detect_patterns(m)
            assert insts and all(i.polarity is Polarity.BENIGN for i in insts)
            want = oracle_solve(m)
            assert want.optimal
            for encoding in ("epigraph", "parts"):
                res = rewrite_abs(m, insts, encoding=encoding)
                assert not any(v.is_integral for v in res.aux_vars)
                got = solve_milp(res.model)
                assert got.optimal and _gap_ok(got.objective, want.objective, 1e-8), (encoding, got, want)


# ---------------------------------------------------------------------------
# 6. linear-fractional objectives

def _fractional_instance(rng):
    names = ["x0", "x1", "x2"]
    bounds = {n: (0, rng.randint(1, 10)) for n in names}
    point = {n: rng.uniform(*b) for n, b in bounds.items()}
    decl = "".join(f"var {n} continuous [{a}, {b}]\n" for n, (a, b) in bounds.items())
    num = " + ".join(f"{rng.uniform(-5, 5):.3f}*{n}" for n in names) + f" + {rng.uniform(-5, 5):.3f}"
    den = " + ".join(f"{rng.uniform(0, 5):.3f}*{n}" for n in names) + f" + {rng.uniform(0.01, 2):.3f}"
    rows = _linear_rows(rng, names, point, 4)
    return parse_model(f"{decl}{rng.choice(('minimize', 'maximize'))}: ({num}) / ({den})\n{rows}")


def test_charnes_cooper_matches_dinkelbach(criterion):
    with criterion(6, "scaled fractional LPs agree with Dinkelbach on 60 instances, gap <= 1e-6"):
        rng = random.Random("fractional")
        for _ in range(60):
            m = _fractional_instance(rng)
            (inst,) = detect_patterns(m)
            res = rewrite_fractional(m, inst)
            sol = solve_lp(res.model)
            ref = dinkelbach(m)
            assert sol.optimal and ref.optimal
            assert _gap_ok(sol.objective, ref.objective, 1e-6), (sol.objective, ref.objective)
            point = res.recovery.apply(sol.assignment)
            assert is_feasible(m, point)
            assert _gap_ok(evaluate(m.objective, point), ref.objective, 1e-6)


def test_cross_multiplication_fails_verification(criterion):
    with criterion(6, "cross-multiplied ratio is rejected by verification"):
        m = _fractional_instance(random.Random("mutant"))
        (inst,) = detect_patterns(m)
        num, den = inst.args
        # r = N / D rewritten as N = r * D keeps the product r * x
        r = Var("r")
        mutated = m.with_(
            vars=m.vars + (VarDecl("r", Domain.CONTINUOUS, -1000.0, 1000.0),),
            objective=r,
            constraints=m.constraints + (Constraint("ratio", Sum((num, Neg(Prod((r, den))))), Rel.EQ, Const(0.0)),),
        )
        rep = verify_equivalence(m, mutated, RewriteTrace())
        assert not rep.osr_pass


# ---------------------------------------------------------------------------
# 7. monotone objectives over binaries

_PHI = {"exp": math.exp, "log": math.log, "sqrt": math.sqrt}


def _monotone_instance(rng):
    n = rng.randint(3, 8)
    names = [f"b{i}" for i in range(n)]
    coeffs = [rng.randint(-5, 5) for _ in names]
    base = sum(abs(c) for c in coeffs) + 2
    g = " + ".join(f"{c}*{v}" for c, v in zip(coeffs, names)) + f" + {base}"
    fn = rng.choice(tuple(_PHI))
    seed_point = {v: rng.randint(0, 1) for v in names}
    rows = []
    for k in range(rng.randint(1, 2)):
        a = [rng.randint(-3, 3) for _ in names]
        lhs = " + ".join(f"{c}*{v}" for c, v in zip(a, names))
        rows.append(f"s.t. r{k}: {lhs} <= {sum(c * seed_point[v] for c, v in zip(a, names)) + rng.randint(0, 2)}\n")
    decl = "".join(f"var {v} binary\n" for v in names)
    sense = rng.choice(("minimize", "maximize"))
    return parse_model(f"{decl}{sense}: {fn}({g})\n{''.join(rows)}"), fn


def _argbest(model):
    names = model.var_names()
    values = {}
    for bits in itertools.product((0.0, 1.0), repeat=len(names)):
        point = dict(zip(names, bits))
        if is_feasible(model, point, tol=0.0):
            values[bits] = evaluate(model.objective, point)
    best = (min if model.sense is Sense.MINIMIZE else max)(values.values())
    return {bits for bits, v in values.items() if v == best}


def test_monotone_argmin_and_recovery(criterion):
    with criterion(7, "monotone rewrite keeps the argmin set and recovers phi(g(x*)) exactly"):
        rng = random.Random("monotone")
        for _ in range(60):
            m, fn = _monotone_instance(rng)
            lin, trace = run_fixpoint(m)
            assert [it.kind for it in trace.iterations] == [PatternKind.MONOTONE]
            assert lin.var_names() == m.var_names()
            assert _argbest(m) == _argbest(lin)
            sol = solve_milp(lin)
            x = trace.project(sol.assignment, m)
            g = m.normalized().objective
            assert isinstance(g, Mono)
            assert trace.recover_objective(sol.objective) == _PHI[fn](evaluate(g.arg, x))


def test_skipping_post_solve_is_caught(criterion):
    with criterion(7, "dropping the post-solve map gives a recovered objective mismatch"):
        rng = random.Random("monotone-mutant")
        for _ in range(20):
            m, _ = _monotone_instance(rng)
            lin, trace = run_fixpoint(m)
            honest = verify_equivalence(m, lin, trace)
            assert honest.osr_pass
            skipped = RewriteTrace(trace.iterations, post_solve=None, recovery=trace.recovery)
            rep = verify_equivalence(m, lin, skipped)
            assert rep.recovered_obj != pytest.approx(rep.oracle_obj)
            assert not rep.osr_pass


# ---------------------------------------------------------------------------
# 8. fixpoint loop

_OPERATORS = {
    PatternKind.BILINEAR: rewrite_bilinear,
    PatternKind.MIN: rewrite_minmax,
    PatternKind.MAX: rewrite_minmax,
    PatternKind.ABS: rewrite_abs,
    PatternKind.MONOTONE: rewrite_monotone,
    PatternKind.LINEAR_FRACTIONAL: lambda m, insts: rewrite_fractional(m, insts[0]),
}


def _replay(model, order, seed):
    lin, trace = run_fixpoint(model, order, seed)
    current = model.normalized()
    initial = {i.kind for i in detect_patterns(current)}
    assert len(trace) <= len(initial) <= 6
    for it in trace.iterations:
        before = detect_patterns(current)
        chosen = [i for i in before if i.kind is it.kind]
        assert len(chosen) == it.instances > 0
        current = _OPERATORS[it.kind](current, chosen).model
        after = detect_patterns(current)
        assert len(after) < len(before)
        assert it.kind not in {i.kind for i in after}
    assert current == lin
    assert not detect_patterns(lin)


def test_fixpoint_properties(criterion):
    with criterion(8, "T <= initial kinds <= 6 with strict elimination on corpus + 200 generated; linear input unchanged"):
        models = [m for _, m, _ in load_corpus()] + [m for m, _ in gen_models(seed=8, count=200)]
        for k, m in enumerate(models):
            _replay(m, "fixed", 0)
            _replay(m, "random", k)
        for m, _ in gen_models(seed=18, count=20, mix={}):
            lin, trace = run_fixpoint(m)
            assert lin is m and len(trace) == 0


# ---------------------------------------------------------------------------
# 9. solver floor

def _vertex_optimum(c, A, b, lower, upper, maximize):
    # every vertex of {A x <= b, lower <= x <= upper} in three dimensions
    G = np.vstack([A, np.eye(3), -np.eye(3)])
    h = np.concatenate([b, upper, -lower])
    best = None
    for rows in itertools.combinations(range(len(G)), 3):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            v = float(c @ x)
            if best is None or (v > best if maximize else v < best):
                best = v
    return best


def test_simplex_vs_vertex_enumeration(criterion):
    with criterion(9, "simplex matches vertex enumeration on 200 LPs (1e-8); B&B matches enumeration on 300 MILPs"):
        rng = np.random.default_rng(9)
        for _ in range(200):
            lower = rng.integers(-5, 1, 3).astype(float)
            upper = lower + rng.integers(1, 8, 3)
            A = rng.integers(-5, 6, (4, 3)).astype(float)
            # three rows pass through a point of the box, the last one is free
            x0 = lower + rng.random(3) * (upper - lower)
            b = np.round(A @ x0 + rng.random(4) * 3, 3)
            b[3] = float(rng.integers(-10, 15))
            c = rng.integers(-5, 6, 3).astype(float)
            maximize = bool(rng.integers(0, 2))
            names = ["x0", "x1", "x2"]
            text = "".join(f"var {n} continuous [{lo}, {hi}]\n" for n, lo, hi in zip(names, lower, upper))
            text += f"{'maximize' if maximize else 'minimize'}: " + " + ".join(f"{v}*{n}" for v, n in zip(c, names)) + "\n"
            for r in range(4):
                text += f"s.t. r{r}: " + " + ".join(f"{v}*{n}" for v, n in zip(A[r], names)) + f" <= {b[r]}\n"
            sol = solve_lp(parse_model(text))
            ref = _vertex_optimum(c, A, b, lower, upper, maximize)
            if ref is None:
                assert sol.status is SolveStatus.INFEASIBLE
            else:
                assert sol.optimal and _gap_ok(sol.objective, ref, 1e-8), (sol.objective, ref)


def test_branch_and_bound_vs_enumeration(criterion):
    with criterion(9, "simplex matches vertex enumeration on 200 LPs (1e-8); B&B matches enumeration on 300 MILPs"):
        rng = np.random.default_rng(90)
        for _ in range(300):
            n = int(rng.integers(1, 13))
            m = int(rng.integers(1, 5))
            c = rng.integers(-9, 10, n)
            A = rng.integers(-6, 7, (m, n))
            b = rng.integers(-3, 3 * n, m)
            maximize = bool(rng.integers(0, 2))
            names = [f"b{i}" for i in range(n)]
            text = "".join(f"var {v} binary\n" for v in names)
            text += f"{'maximize' if maximize else 'minimize'}: " + " + ".join(f"{v}*{x}" for v, x in zip(c, names)) + "\n"
            for r in range(m):
                text += f"s.t. r{r}: " + " + ".join(f"{v}*{x}" for v, x in zip(A[r], names)) + f" <= {b[r]}\n"
            X = np.array(list(itertools.product((0, 1), repeat=n)))
            ok = np.all(X @ A.T <= b, axis=1)
            sol = solve_milp(parse_model(text))
            if not ok.any():
                assert sol.status is SolveStatus.INFEASIBLE
                continue
            vals = X[ok] @ c
            ref = float(vals.max() if maximize else vals.min())
            assert sol.optimal and sol.objective == ref


# ---------------------------------------------------------------------------
# 10. robustness

_SOUP = list("varxyzbinaryconuspmiefgl0123456789.+-*/()[],:=<>#_ \t\n") + [
    "var ", "param ", "minimize: ", "maximize: ", "s.t. ", "abs(", "min(", "max(", "exp(", "log(", "sqrt(",
    " continuous [0, 1]\n", " binary\n", "inf", "1e308", "1e999", "\x00", "é", "\r\n", "\n  ",
]


def _fuzz_inputs(rng, count):
    bases = (
        "var x continuous [0, 10]\nvar b binary\nparam p = 2\nminimize: p*x + abs(x - 3) + b*x\ns.t. c: max(x, 1) <= 4\n",
        "var y continuous [1, 5]\nmaximize: (y + 1) / (y + 2)\ns.t. c: y >= 2\n",
    )
    for k in range(count):
        mode = k % 4
        if mode == 0:
            yield bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 300)))
        elif mode == 1:
            yield "".join(rng.choice(_SOUP) for _ in range(rng.randint(0, 200)))
        elif mode == 2:
            chars = list(rng.choice(bases))
            for _ in range(rng.randint(1, 10)):
                op = rng.random()
                i = rng.randrange(len(chars))
                if op < 0.4:
                    chars[i] = rng.choice(_SOUP)
                elif op < 0.7:
                    del chars[i]
                else:
                    chars.insert(i, rng.choice(_SOUP))
            yield "".join(chars)
        else:
            depth = rng.randint(0, 400)
            yield "var x continuous [0, 1]\nminimize: " + "abs(" * depth + "x" + ")" * rng.randint(0, depth)


def _large_inputs():
    n = 20000
    decl = "\n".join(f"var v{i} continuous [0, 10]" for i in range(n))
    obj = " + ".join(f"{i % 7 + 1}*v{i}" for i in range(n))
    big = f"{decl}\nminimize: {obj}\ns.t. c: {obj} <= 5\n"
    yield big[: 1 << 20]
    yield big[: (1 << 20) - 12345] + "*(((("
    yield "(" * ((1 << 20) - 64)
    yield "#" * ((1 << 20) - 1)
    yield bytes(range(256)) * 4096


def test_parser_fuzz(criterion):
    with criterion(10, "parser fuzz never crashes; parameter products never flagged; 0 false positives on 500 models"):
        rng = random.Random(10)
        n = 0
        for text in itertools.chain(_fuzz_inputs(rng, 10_000 - 5), _large_inputs()):
            assert len(text) <= 1 << 20
            model, diags = parse_model_diagnostics(text)
            assert (model is None) == bool([d for d in diags if d.severity == "error"])
            n += 1
        assert n == 10_000


def test_parameter_products_never_flagged(criterion):
    with criterion(10, "parser fuzz never crashes; parameter products never flagged; 0 false positives on 500 models"):
        rng = random.Random("params")
        for _ in range(200):
            p = {f"p{i}": rng.uniform(-5, 5) for i in range(3)}
            decl = "".join(f"param {k} = {v!r}\n" for k, v in p.items())
            decl += "var x continuous [0, 5]\nvar y continuous [-2, 2]\nvar b binary\n"
            terms = [f"{rng.choice(list(p))}*{rng.choice('xyb')}" for _ in range(4)]
            terms.append(f"{rng.choice(list(p))}*{rng.choice(list(p))}*x")
            terms.append(f"({rng.choice(list(p))} + 1)*(y - {rng.choice(list(p))})")
            m = parse_model(f"{decl}minimize: {' + '.join(terms)}\ns.t. c: {rng.choice(list(p))}*x + b <= 10\n")
            assert detect_patterns(m) == []


def test_no_false_positives(criterion):
    with criterion(10, "parser fuzz never crashes; parameter products never flagged; 0 false positives on 500 models"):
        flagged = [ann.instance_id for m, ann in gen_models(seed=100, count=500, mix={}) if detect_patterns(m)]
        assert flagged == []
