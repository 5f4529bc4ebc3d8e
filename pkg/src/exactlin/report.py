"""JSON rendering of rewrite traces and verification results."""

from __future__ import annotations

import json
import math

from .rewrite import RewriteTrace
from .verify import VerifyReport


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v + 0.0 if math.isfinite(v) else None


def trace_dict(trace: RewriteTrace) -> dict:
    return {
        "iterations": [
            {
                "t": it.t,
                "kind": it.kind.value,
                "instances": it.instances,
                "aux_vars": [v.name for v in it.aux_vars],
                "aux_constraints": list(it.aux_constraints),
                "big_m": [_num(b.m_value) for b in it.big_m],
                "notes": list(it.notes),
            }
            for it in trace.iterations
        ],
        "post_solve": {
            "fn": trace.post_solve.fn if trace.post_solve else None,
            "direction": trace.post_solve.direction if trace.post_solve else None,
        },
    }


def verify_dict(report: VerifyReport | None) -> dict | None:
    if report is None:
        return None
    d = report.to_dict()
    for k in ("oracle_obj", "reformulated_obj", "recovered_obj", "abs_gap"):
        d[k] = _num(d[k])
    return d


def emit_json_report(trace: RewriteTrace, verify: VerifyReport | None = None, input_path: str | None = None) -> str:
    """Stable JSON text: same inputs give the same bytes."""
    doc = {"input": input_path}
    doc.update(trace_dict(trace))
    doc["verify"] = verify_dict(verify)
    return json.dumps(doc, indent=2) + "\n"
