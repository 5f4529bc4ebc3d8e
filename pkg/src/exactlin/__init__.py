"""Detect exactly-linearizable nonlinearities in optimization models and rewrite them into LP/MILP form."""

from .detect import PatternInstance, PatternKind, Path, Polarity, applicable_kinds, detect_patterns, polarity_of
from .errors import ExactlinError
from .harness import InstanceAnnotation, bench, compute_metrics, gen_models, load_corpus
from .ir import Interval, affinity_of, evaluate, interval_of, normalize
from .lpformat import emit_lp, read_lp
from .model import Domain, Model, Rel, Sense, VarDecl
from .nlm import format_model, parse_model
from .oracle import dinkelbach, oracle_solve
from .report import emit_json_report
from .rewrite import (
    RewriteTrace, rewrite_abs, rewrite_bilinear, rewrite_fractional, rewrite_minmax,
    rewrite_monotone, run_fixpoint,
)
from .solver import Solution, SolveStatus, solve_lp, solve_milp
from .verify import VerifyReport, verify_equivalence

__all__ = [
    "Domain", "ExactlinError", "InstanceAnnotation", "Interval", "Model", "Path", "PatternInstance",
    "PatternKind", "Polarity", "Rel", "RewriteTrace", "Sense", "Solution", "SolveStatus", "VarDecl",
    "VerifyReport", "affinity_of", "applicable_kinds", "bench", "compute_metrics", "detect_patterns",
    "dinkelbach", "emit_json_report", "emit_lp", "evaluate", "format_model", "gen_models",
    "interval_of", "load_corpus", "normalize", "oracle_solve", "parse_model", "polarity_of",
    "read_lp", "rewrite_abs", "rewrite_bilinear", "rewrite_fractional", "rewrite_minmax",
    "rewrite_monotone", "run_fixpoint", "solve_lp", "solve_milp", "verify_equivalence",
]
