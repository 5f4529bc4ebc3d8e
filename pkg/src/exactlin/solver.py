"""Desk-scale LP/MILP solving: dense two-phase tableau simplex and best-bound B&B.

Nothing here is tuned for speed; models in this package have a handful of
variables. Bland's rule takes over after a run of degenerate pivots so the
simplex always terminates.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linear import constraint_rows, objective_form
from .model import Model, Rel, Sense

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
INT_TOL = 1e-6
MAX_PIVOTS = 100_000
MAX_NODES = 100_000
BLAND_AFTER = 1000


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class Solution:
    status: SolveStatus
    objective: float = math.nan
    assignment: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "assignment": dict(self.assignment),
        }


@dataclass
class LinearProgram:
    """``min/max c.x + c0`` s.t. ``A x (rel) b``, ``lower <= x <= upper``."""

    names: list
    c: np.ndarray
    c0: float
    A: np.ndarray
    rels: list
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    maximize: bool = False

    @classmethod
    def from_model(cls, model: Model) -> "LinearProgram":
        names = model.var_names()
        index = {n: i for i, n in enumerate(names)}
        obj, c0 = objective_form(model)
        rows = constraint_rows(model)
        n = len(names)
        c = np.zeros(n)
        for k, v in obj.items():
            c[index[k]] = v
        A = np.zeros((len(rows), n))
        for r, row in enumerate(rows):
            for k, v in row.coeffs.items():
                A[r, index[k]] = v
        return cls(
            names=names,
            c=c,
            c0=c0,
            A=A,
            rels=[row.rel for row in rows],
            b=np.array([row.rhs for row in rows], dtype=float),
            lower=np.array([v.lower for v in model.vars], dtype=float),
            upper=np.array([v.upper for v in model.vars], dtype=float),
            integer=np.array([v.is_integral for v in model.vars], dtype=bool),
            maximize=model.sense is Sense.MAXIMIZE,
        )

    def objective_value(self, x) -> float:
        return float(math.fsum(np.asarray(self.c) * np.asarray(x)) + self.c0)

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if len(self.b):
            ax = self.A @ x
            for r, rel in enumerate(self.rels):
                d = ax[r] - self.b[r]
                if rel is Rel.LE:
                    worst = max(worst, d)
                elif rel is Rel.GE:
                    worst = max(worst, -d)
                else:
                    worst = max(worst, abs(d))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        return worst


# ---------------------------------------------------------------------------
# simplex

class _Tableau:
    def __init__(self, T, basis):
        self.T = T
        self.basis = basis
        self.pivots = 0
        self.degenerate = 0

    def pivot(self, r, k):
        T = self.T
        T[r] /= T[r, k]
        col = T[:, k].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, k] = 0.0
        T[r, k] = 1.0
        self.basis[r] = k
        self.pivots += 1

    def run(self, allowed: np.ndarray) -> str:
        """Minimize the objective row; return 'optimal', 'unbounded' or 'limit'."""
        T = self.T
        m = T.shape[0] - 1
        while True:
            if self.pivots >= MAX_PIVOTS:
                return "limit"
            rc = T[-1, :-1]
            candidates = np.flatnonzero(allowed & (rc < -PIVOT_TOL))
            if candidates.size == 0:
                return "optimal"
            if self.degenerate > BLAND_AFTER:
                k = int(candidates[0])
            else:
                k = int(candidates[np.argmin(rc[candidates])])
            col = T[:m, k]
            rows = np.flatnonzero(col > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded"
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tied, key=lambda i: self.basis[i]))
            if best <= 1e-12:
                self.degenerate += 1
            self.pivot(r, k)


def _standard_form(lp: LinearProgram, lower, upper):
    """Shift/split variables so every column is >= 0. Returns mapping data."""
    n = len(lp.names)
    cols = []  # (orig index, sign)
    shift = np.zeros(n)
    extra_rows = []  # (col position, ub)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if math.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ncol = len(cols)
    m0 = lp.A.shape[0]
    A = np.zeros((m0 + len(extra_rows), ncol))
    for p, (j, s) in enumerate(cols):
        A[:m0, p] = s * lp.A[:, j]
    b = np.concatenate([lp.b - lp.A @ shift if m0 else np.zeros(0), np.array([u for _, u in extra_rows])])
    rels = list(lp.rels) + [Rel.LE] * len(extra_rows)
    for r, (p, _u) in enumerate(extra_rows):
        A[m0 + r, p] = 1.0
    sign = -1.0 if lp.maximize else 1.0
    c = np.array([sign * s * lp.c[j] for j, s in cols])
    return A, b, rels, c, cols, shift


def _simplex(lp: LinearProgram, lower=None, upper=None):
    """Return ``(status, x)`` for the LP relaxation with the given bounds."""
    lower = lp.lower if lower is None else lower
    upper = lp.upper if upper is None else upper
    if np.any(lower > upper + FEAS_TOL):
        return SolveStatus.INFEASIBLE, None
    A, b, rels, c, cols, shift = _standard_form(lp, lower, upper)
    m, ncol = A.shape
    A = A.copy()
    b = b.copy()
    rels = list(rels)
    for r in range(m):
        if b[r] < 0:
            A[r] *= -1
            b[r] *= -1
            rels[r] = rels[r].flipped()
    n_slack = sum(1 for rel in rels if rel is not Rel.EQ)
    n_art = sum(1 for rel in rels if rel is not Rel.LE)
    total = ncol + n_slack + n_art
    T = np.zeros((m + 1, total + 1))
    T[:m, :ncol] = A
    T[:m, -1] = b
    basis = [0] * m
    s_pos, a_pos = ncol, ncol + n_slack
    art_cols = []
    for r, rel in enumerate(rels):
        if rel is Rel.LE:
            T[r, s_pos] = 1.0
            basis[r] = s_pos
            s_pos += 1
        else:
            if rel is Rel.GE:
                T[r, s_pos] = -1.0
                s_pos += 1
            T[r, a_pos] = 1.0
            basis[r] = a_pos
            art_cols.append(a_pos)
            a_pos += 1
    tab = _Tableau(T, basis)
    allowed = np.ones(total, dtype=bool)

    if art_cols:
        T[-1, :] = 0.0
        for r in range(m):
            if basis[r] >= ncol + n_slack:
                T[-1, :] -= T[r, :]
        for a in art_cols:
            T[-1, a] = 0.0
        status = tab.run(allowed)
        if status == "limit":
            return SolveStatus.ITERATION_LIMIT, None
        scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
        if -T[-1, -1] > 1e-9 * scale:
            return SolveStatus.INFEASIBLE, None
        # drive zero-level artificials out of the basis
        keep = []
        for r in range(m):
            if basis[r] >= ncol + n_slack:
                row = T[r, : ncol + n_slack]
                nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                    keep.append(r)
            else:
                keep.append(r)
        if len(keep) < m:
            T = np.vstack([T[keep], T[-1:]])
            tab.T = T
            tab.basis = [basis[r] for r in keep]
            basis = tab.basis
            m = len(keep)
        allowed[ncol + n_slack:] = False

    full_c = np.zeros(total)
    full_c[:ncol] = c
    T = tab.T
    T[-1, :-1] = full_c
    T[-1, -1] = 0.0
    for r in range(m):
        cb = full_c[basis[r]]
        if cb:
            T[-1, :] -= cb * T[r, :]
    status = tab.run(allowed)
    if status == "limit":
        return SolveStatus.ITERATION_LIMIT, None
    if status == "unbounded":
        return SolveStatus.UNBOUNDED, None
    xs = np.zeros(total)
    for r in range(m):
        xs[basis[r]] = T[r, -1]
    x = shift.copy()
    for p, (j, s) in enumerate(cols):
        x[j] += s * xs[p]
    x = np.minimum(np.maximum(x, lower), upper)
    return SolveStatus.OPTIMAL, x


def _solution(lp: LinearProgram, status, x) -> Solution:
    if status is not SolveStatus.OPTIMAL:
        return Solution(status)
    return Solution(status, lp.objective_value(x), dict(zip(lp.names, (float(v) + 0.0 for v in x))))


def solve_lp_matrix(lp: LinearProgram) -> Solution:
    return _solution(lp, *_simplex(lp))


def solve_lp(model: Model) -> Solution:
    """Solve the continuous relaxation of a linear model."""
    return solve_lp_matrix(LinearProgram.from_model(model))


# ---------------------------------------------------------------------------
# branch and bound

def solve_milp_matrix(lp: LinearProgram) -> Solution:
    if not lp.integer.any():
        return solve_lp_matrix(lp)
    sign = -1.0 if lp.maximize else 1.0
    lower = lp.lower.copy()
    upper = lp.upper.copy()
    ints = np.flatnonzero(lp.integer)
    lower[ints] = np.ceil(lower[ints] - INT_TOL)
    upper[ints] = np.floor(upper[ints] + INT_TOL)
    status, x = _simplex(lp, lower, upper)
    if status is not SolveStatus.OPTIMAL:
        return Solution(status)
    counter = itertools.count()
    heap = [(sign * lp.objective_value(x), next(counter), lower, upper, x)]
    best_val, best_x = math.inf, None
    nodes = 0
    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        if bound >= best_val - 1e-9:
            break
        frac = np.abs(x[ints] - np.round(x[ints]))
        if frac.max(initial=0.0) <= INT_TOL:
            xr = x.copy()
            xr[ints] = np.round(xr[ints])
            val = sign * lp.objective_value(xr)
            if val < best_val:
                best_val, best_x = val, xr
            continue
        j = int(ints[int(np.argmax(frac))])
        down_hi = hi.copy()
        down_hi[j] = math.floor(x[j])
        up_lo = lo.copy()
        up_lo[j] = math.ceil(x[j])
        for child_lo, child_hi in ((lo, down_hi), (up_lo, hi)):
            nodes += 1
            if nodes > MAX_NODES:
                return Solution(SolveStatus.ITERATION_LIMIT)
            st, cx = _simplex(lp, child_lo, child_hi)
            if st is SolveStatus.OPTIMAL:
                val = sign * lp.objective_value(cx)
                if val < best_val - 1e-9:
                    heapq.heappush(heap, (val, next(counter), child_lo, child_hi, cx))
            elif st is SolveStatus.UNBOUNDED:
                return Solution(SolveStatus.UNBOUNDED)
            elif st is SolveStatus.ITERATION_LIMIT:
                return Solution(st)
    if best_x is None:
        return Solution(SolveStatus.INFEASIBLE)
    return _solution(lp, SolveStatus.OPTIMAL, best_x)


def solve_milp(model: Model) -> Solution:
    """Globally optimal solution of a linear model with integer/binary variables."""
    return solve_milp_matrix(LinearProgram.from_model(model))
