"""Command line entry point: ``exactlin <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .detect import detection_report
from .errors import ExactlinError
from .harness import bench, gen_models
from .lpformat import emit_lp
from .nlm import format_model, parse_model
from .report import emit_json_report, verify_dict
from .rewrite import run_fixpoint
from .solver import solve_milp
from .verify import DEFAULT_TOL, verify_equivalence

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_OSR = 2
EXIT_USAGE = 64


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(f"{self.prog}: {message}")


def _add_rewrite_flags(p):
    p.add_argument("--order", choices=("fixed", "random"), default="fixed")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exactlin", description="Exact linearization of nonlinear optimization models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="list pattern occurrences as JSON")
    p.add_argument("model")

    p = sub.add_parser("linearize", help="rewrite to LP/MILP and write an LP file")
    p.add_argument("model")
    p.add_argument("-o", "--output", help="LP output path (default: stdout)")
    p.add_argument("--trace", help="write the rewrite trace JSON here")
    _add_rewrite_flags(p)

    p = sub.add_parser("solve", help="linearize, solve and report the original objective")
    p.add_argument("model")
    _add_rewrite_flags(p)

    p = sub.add_parser("verify", help="compare the rewritten optimum with the reference optimizer")
    p.add_argument("model")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--report", help="write the full JSON report here")
    _add_rewrite_flags(p)

    p = sub.add_parser("bench", help="run the corpus and compute DSR/RSR/CSR/OSR")
    p.add_argument("corpus", nargs="?", help="directory of .nlm files (default: bundled corpus)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--report", help="write the BenchReport JSON here")
    p.add_argument("--timings", action="store_true", help="include per-instance runtimes in the report")
    _add_rewrite_flags(p)

    p = sub.add_parser("gen", help="write random models with planted patterns")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--mix", default=None, help="comma list like abs=1,min=2; empty string for pattern-free")
    p.add_argument("-o", "--output", help="directory for .nlm/.ann.json files (default: stdout)")
    return parser


def _load(path: str):
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_mix(text: str | None):
    if text is None:
        return None
    mix = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        kind, _, count = item.partition("=")
        mix[kind.strip()] = int(count or 1)
    return mix


def _cmd_detect(args) -> int:
    print(json.dumps(detection_report(_load(args.model)), indent=2))
    return EXIT_OK


def _cmd_linearize(args) -> int:
    model = _load(args.model)
    linear, trace = run_fixpoint(model, args.order, args.seed)
    _write(args.output, emit_lp(linear))
    if args.trace:
        Path(args.trace).write_text(emit_json_report(trace, None, args.model), encoding="utf-8")
    return EXIT_OK


def _cmd_solve(args) -> int:
    model = _load(args.model)
    linear, trace = run_fixpoint(model, args.order, args.seed)
    sol = solve_milp(linear)
    out = {"status": sol.status.value, "objective": None, "assignment": {}}
    if sol.optimal:
        out["objective"] = trace.recover_objective(sol.objective)
        out["assignment"] = trace.project(sol.assignment, model)
    print(json.dumps(out, indent=2))
    return EXIT_OK if sol.optimal else EXIT_ERROR


def _cmd_verify(args) -> int:
    model = _load(args.model)
    linear, trace = run_fixpoint(model, args.order, args.seed)
    report = verify_equivalence(model, linear, trace, args.tol)
    print(json.dumps(verify_dict(report), indent=2))
    if args.report:
        Path(args.report).write_text(emit_json_report(trace, report, args.model), encoding="utf-8")
    return EXIT_OK if report.osr_pass else EXIT_OSR


def _cmd_bench(args) -> int:
    report = bench(args.corpus, args.tol, args.order, args.seed)
    for row in report.instances:
        flags = " ".join(f"{k}={'ok' if row[k] else 'FAIL'}" for k in ("detect_ok", "reformulate_ok", "emit_ok", "osr_pass"))
        print(f"{row['id']:<12} {flags}" + (f"  {row['error']}" if row["error"] else ""))
    agg = report.aggregates
    print(f"DSR {agg['dsr']:.1f}%  RSR {agg['rsr']:.1f}%  CSR {agg['csr']:.1f}%  OSR {agg['osr']:.1f}%")
    if args.report:
        Path(args.report).write_text(report.to_json(args.timings), encoding="utf-8")
    return EXIT_OK if report.all_pass else EXIT_OSR


def _cmd_gen(args) -> int:
    models = gen_models(args.seed, args.count, _parse_mix(args.mix))
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for model, ann in models:
            (out / f"{ann.instance_id}.nlm").write_text(format_model(model), encoding="utf-8")
            (out / f"{ann.instance_id}.ann.json").write_text(ann.to_json(), encoding="utf-8")
    else:
        for model, ann in models:
            sys.stdout.write(f"# {ann.instance_id}\n{format_model(model)}\n")
    return EXIT_OK


COMMANDS = {
    "detect": _cmd_detect,
    "linearize": _cmd_linearize,
    "solve": _cmd_solve,
    "verify": _cmd_verify,
    "bench": _cmd_bench,
    "gen": _cmd_gen,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ExactlinError, OSError, ValueError) as exc:
        print(f"exactlin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
