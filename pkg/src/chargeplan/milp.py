"""Embedded LP/MIP kernel.

A solver-agnostic model container plus a dense two-phase simplex (with dual
and reduced-cost extraction) and a best-first branch-and-bound over binary
variables.  Dense tableaus are deliberate: every model this package solves is
desk scale, and a self-contained kernel keeps results reproducible.  The
narrow ``solve_lp`` / ``solve_mip`` surface lets an external solver be
adapted in later without touching callers.

Dual sign convention for minimization: duals are shadow prices d(objective)/
d(rhs), so >= rows get nonnegative duals, <= rows nonpositive, = rows free.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

INF = math.inf
CONTINUOUS = "continuous"
BINARY = "binary"
LE, GE, EQ = "<=", ">=", "="

_FEAS_TOL = 1e-7
_OPT_TOL = 1e-7
_PIVOT_TOL = 1e-9
_INT_TOL = 1e-6


class KernelError(RuntimeError):
    """Internal solver failure (iteration guard tripped, singular basis, ...)."""


class ModelError(ValueError):
    """Model construction violates the container's invariants."""


@dataclass(frozen=True)
class VarDef:
    id: int
    kind: str
    lower: float
    upper: float
    name: str


@dataclass(frozen=True)
class ConstraintDef:
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    name: str


class Model:
    """Minimization MILP: variables with bounds, linear rows, linear objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.vars: list[VarDef] = []
        self.cons: list[ConstraintDef] = []
        self.obj: dict[int, float] = {}
        self.obj_offset: float = 0.0

    def add_var(self, kind: str = CONTINUOUS, lower: float = 0.0, upper: float = INF,
                name: str = "") -> int:
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == BINARY and not (0.0 <= lower and upper <= 1.0):
            raise ModelError(f"binary variable bounds must lie in [0,1], got [{lower},{upper}]")
        if lower > upper:
            raise ModelError(f"variable lower bound {lower} exceeds upper bound {upper}")
        vid = len(self.vars)
        self.vars.append(VarDef(vid, kind, float(lower), float(upper), name or f"v{vid}"))
        return vid

    def add_binary(self, name: str = "") -> int:
        return self.add_var(BINARY, 0.0, 1.0, name)

    def add_constraint(self, terms, sense: str, rhs: float, name: str = "") -> int:
        if sense not in (LE, GE, EQ):
            raise ModelError(f"unknown constraint sense {sense!r}")
        seen = set()
        clean = []
        for vid, coeff in terms:
            if vid in seen:
                raise ModelError(f"duplicate variable {vid} in constraint {name!r}")
            seen.add(vid)
            if not 0 <= vid < len(self.vars):
                raise ModelError(f"unknown variable id {vid} in constraint {name!r}")
            if coeff != 0.0:
                clean.append((vid, float(coeff)))
        idx = len(self.cons)
        self.cons.append(ConstraintDef(tuple(clean), sense, float(rhs), name or f"c{idx}"))
        return idx

    def set_objective(self, terms, offset: float = 0.0) -> None:
        obj: dict[int, float] = {}
        for vid, coeff in terms:
            obj[vid] = obj.get(vid, 0.0) + float(coeff)
        self.obj = obj
        self.obj_offset = float(offset)

    @property
    def num_vars(self) -> int:
        return len(self.vars)

    @property
    def num_constraints(self) -> int:
        return len(self.cons)

    @property
    def binary_ids(self) -> list[int]:
        return [v.id for v in self.vars if v.kind == BINARY]

    @property
    def num_binaries(self) -> int:
        return sum(1 for v in self.vars if v.kind == BINARY)

    def dump_lp(self) -> str:
        """Human-readable LP-style text for debugging; write-only, never parsed."""
        out = [f"\\ model {self.name}", "Minimize", " obj:"]
        parts = [f" {c:+g} {self.vars[v].name}" for v, c in sorted(self.obj.items())]
        if self.obj_offset:
            parts.append(f" {self.obj_offset:+g}")
        out.append("  " + "".join(parts))
        out.append("Subject To")
        for con in self.cons:
            row = "".join(f" {c:+g} {self.vars[v].name}" for v, c in con.terms)
            out.append(f" {con.name}: {row} {con.sense} {con.rhs:g}")
        out.append("Bounds")
        for v in self.vars:
            out.append(f" {v.lower:g} <= {v.name} <= {v.upper:g}")
        out.append("Binaries")
        out.append(" " + " ".join(self.vars[v].name for v in self.binary_ids))
        out.append("End")
        return "\n".join(out)


@dataclass
class LpSolution:
    status: str                    # optimal | infeasible | unbounded
    values: dict[int, float]
    objective: float
    duals: dict[int, float]
    reduced_costs: dict[int, float]


@dataclass
class MipSolution:
    status: str                    # optimal | feasible | infeasible | time_limit
    values: dict[int, float]
    objective: float
    bound: float
    gap: float
    nodes: int = 0


@dataclass(frozen=True)
class MipLimits:
    time_limit_s: float | None = None
    gap_tol: float = 1e-6
    node_limit: int | None = None


# ---------------------------------------------------------------------------
# Simplex


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    other = T[:, col].copy()
    other[row] = 0.0
    T -= np.outer(other, T[row])


def _run_simplex(T: np.ndarray, basis: list[int], c: np.ndarray, allowed: int):
    """Dantzig-rule simplex on tableau T = [B^-1 A | B^-1 b]; switches to
    Bland's rule after `allowed` consecutive degenerate pivots.  Returns
    'optimal' or 'unbounded'.

    The reduced-cost row is maintained incrementally and re-derived from the
    basis whenever it claims optimality, so drift cannot end a solve early.
    """
    m, ncols = T.shape[0], T.shape[1] - 1
    bland = False
    degenerate = 0
    red = c - c[basis] @ T[:, :ncols]
    red[basis] = 0.0
    max_iters = 50 * (m + ncols) + 2000
    for _ in range(max_iters):
        if bland:
            negs = np.flatnonzero(red < -_OPT_TOL)
            enter = int(negs[0]) if negs.size else -1
        else:
            enter = int(np.argmin(red))
            if red[enter] >= -_OPT_TOL:
                enter = -1
        if enter < 0:
            exact = c - c[basis] @ T[:, :ncols]
            exact[basis] = 0.0
            if exact.min() >= -_OPT_TOL:
                return "optimal"
            red = exact
            continue
        col = T[:, enter]
        rows = np.flatnonzero(col > _PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[np.flatnonzero(ratios <= best + 1e-12)]
        if bland:
            leave = int(ties[np.argmin(np.asarray(basis)[ties])])
        else:
            leave = int(ties[0])
        if best <= 1e-11:
            degenerate += 1
            if degenerate > allowed:
                bland = True
        else:
            degenerate = 0
        _pivot(T, leave, enter)
        red -= red[enter] * T[leave, :ncols]
        red[enter] = 0.0
        basis[leave] = enter
    raise KernelError("simplex iteration guard tripped")


def _solve_lp_arrays(model: Model, overrides: dict[int, tuple[float, float]] | None):
    """Two-phase simplex on the model with optional bound overrides.

    Returns (status, values, objective, duals, reduced_costs).
    """
    n = model.num_vars
    lo = np.array([v.lower for v in model.vars])
    hi = np.array([v.upper for v in model.vars])
    if overrides:
        for vid, (l, u) in overrides.items():
            lo[vid] = max(lo[vid], l)
            hi[vid] = min(hi[vid], u)
    if np.any(lo > hi + 1e-12):
        return "infeasible", {}, INF, {}, {}

    fixed_val = {}
    live: list[int] = []
    for vid in range(n):
        if hi[vid] - lo[vid] <= 1e-12:
            fixed_val[vid] = lo[vid]
        else:
            live.append(vid)
    col_of = {vid: k for k, vid in enumerate(live)}
    nlive = len(live)

    c_live = np.zeros(nlive)
    const = model.obj_offset
    for vid, coeff in model.obj.items():
        if vid in fixed_val:
            const += coeff * fixed_val[vid]
        else:
            const += coeff * lo[vid]
            c_live[col_of[vid]] += coeff

    # rows: original constraints with fixed/lower-shift folded into the rhs,
    # then one bound row per live variable with a finite upper bound
    rows = []          # (cols, vals, sense, rhs, tag) ; tag >= 0 is an original row
    for idx, con in enumerate(model.cons):
        rhs = con.rhs
        cols, vals = [], []
        for vid, coeff in con.terms:
            if vid in fixed_val:
                rhs -= coeff * fixed_val[vid]
            else:
                rhs -= coeff * lo[vid]
                cols.append(col_of[vid])
                vals.append(coeff)
        rows.append((cols, vals, con.sense, rhs, idx))
    for vid in live:
        if hi[vid] < INF:
            rows.append(([col_of[vid]], [1.0], LE, hi[vid] - lo[vid], -1))

    m = len(rows)
    n_slack = sum(1 for r in rows if r[2] in (LE, GE))
    sign = np.ones(m)
    A = np.zeros((m, nlive + n_slack))
    b = np.zeros(m)
    senses = []
    slack_at = 0
    basis_plan: list[int | None] = []
    for r, (cols, vals, sense, rhs, _tag) in enumerate(rows):
        flip = rhs < 0
        if flip:
            sign[r] = -1.0
            rhs = -rhs
            vals = [-v for v in vals]
            sense = {LE: GE, GE: LE, EQ: EQ}[sense]
        A[r, cols] = vals
        b[r] = rhs
        senses.append(sense)
        if sense == LE:
            A[r, nlive + slack_at] = 1.0
            basis_plan.append(nlive + slack_at)
            slack_at += 1
        elif sense == GE:
            A[r, nlive + slack_at] = -1.0
            basis_plan.append(None)
            slack_at += 1
        else:
            basis_plan.append(None)

    art_rows = [r for r in range(m) if basis_plan[r] is None]
    ncols = A.shape[1]
    keep_rows = list(range(m))
    if art_rows:
        Aart = np.zeros((m, ncols + len(art_rows)))
        Aart[:, :ncols] = A
        basis = []
        art_cols = set()
        for k, r in enumerate(art_rows):
            Aart[r, ncols + k] = 1.0
            art_cols.add(ncols + k)
        for r in range(m):
            basis.append(basis_plan[r] if basis_plan[r] is not None else ncols + art_rows.index(r))
        T = np.hstack([Aart, b.reshape(-1, 1)])
        c1 = np.zeros(Aart.shape[1])
        for col in art_cols:
            c1[col] = 1.0
        status = _run_simplex(T, basis, c1, allowed=10 * (m + Aart.shape[1]))
        if status != "optimal":
            raise KernelError("phase-1 objective cannot be unbounded")
        if c1[basis] @ T[:, -1] > _FEAS_TOL:
            return "infeasible", {}, INF, {}, {}
        # drive leftover artificials out of the basis; a row that only the
        # artificial can represent is redundant and dropped
        drop = []
        for r in range(m):
            if basis[r] in art_cols:
                piv_cols = np.flatnonzero(np.abs(T[r, :ncols]) > 1e-8)
                if piv_cols.size:
                    _pivot(T, r, int(piv_cols[0]))
                    basis[r] = int(piv_cols[0])
                else:
                    drop.append(r)
        if drop:
            keep = [r for r in range(m) if r not in set(drop)]
            T = T[keep]
            basis = [basis[r] for r in keep]
            keep_rows = [keep_rows[r] for r in keep]
        T = np.hstack([T[:, :ncols], T[:, [-1]]])
    else:
        basis = [bp for bp in basis_plan]  # all rows start on slacks
        T = np.hstack([A, b.reshape(-1, 1)])

    c2 = np.zeros(ncols)
    c2[:nlive] = c_live
    status = _run_simplex(T, basis, c2, allowed=10 * (len(basis) + ncols))
    if status == "unbounded":
        return "unbounded", {}, -INF, {}, {}

    xwork = np.zeros(ncols)
    xwork[basis] = T[:, -1]
    values = {}
    for vid in range(n):
        if vid in fixed_val:
            values[vid] = float(fixed_val[vid])
        else:
            values[vid] = float(lo[vid] + xwork[col_of[vid]])
    objective = float(c2 @ xwork + const)

    # duals from the final basis: solve B^T y = c_B on the phase-2 matrix
    A2 = A[keep_rows] if len(keep_rows) != m else A
    B = A2[:, basis]
    try:
        y = np.linalg.solve(B.T, c2[basis])
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(B.T, c2[basis], rcond=None)[0]
    duals = {idx: 0.0 for idx in range(model.num_constraints)}
    for pos, r in enumerate(keep_rows):
        tag = rows[r][4]
        if tag >= 0:
            duals[tag] = float(sign[r] * y[pos])
    red_all = c2 - y @ A2
    reduced = {}
    for vid in range(n):
        reduced[vid] = float(red_all[col_of[vid]]) if vid in col_of else 0.0
    return "optimal", values, objective, duals, reduced


def solve_lp(model: Model, overrides: dict[int, tuple[float, float]] | None = None) -> LpSolution:
    """Solve the continuous relaxation (all kinds treated as continuous)."""
    status, values, obj, duals, reduced = _solve_lp_arrays(model, overrides)
    return LpSolution(status=status, values=values, objective=obj, duals=duals,
                      reduced_costs=reduced)


# ---------------------------------------------------------------------------
# Branch and bound


def _fractional_binaries(model: Model, values: dict[int, float]):
    out = []
    for vid in model.binary_ids:
        v = values[vid]
        if min(v, 1.0 - v) > _INT_TOL:
            out.append((vid, v))
    return out


def solve_mip(model: Model, limits: MipLimits | None = None) -> MipSolution:
    """Best-first branch and bound, branching on the most fractional binary
    (ties toward the lowest variable id).  Deterministic for a fixed model."""
    limits = limits or MipLimits()
    t0 = time.monotonic()

    def out_of_time() -> bool:
        return limits.time_limit_s is not None and time.monotonic() - t0 > limits.time_limit_s

    incumbent: dict[int, float] | None = None
    inc_obj = INF
    nodes_solved = 0

    root = solve_lp(model)
    nodes_solved += 1
    if root.status == "infeasible":
        return MipSolution("infeasible", {}, INF, INF, 0.0, nodes_solved)
    if root.status == "unbounded":
        raise KernelError("LP relaxation unbounded; MIP is ill-posed")

    import heapq

    seq = 0
    heap: list = []

    def consider(lp: LpSolution, overrides):
        """Register an LP-solved node: incumbent if integral, else enqueue."""
        nonlocal incumbent, inc_obj, seq
        frac = _fractional_binaries(model, lp.values)
        if not frac:
            if lp.objective < inc_obj - 1e-12:
                inc_obj = lp.objective
                incumbent = dict(lp.values)
            return
        branch_var = min(frac, key=lambda t: (abs(t[1] - 0.5), t[0]))[0]
        heapq.heappush(heap, (lp.objective, seq, overrides, branch_var))
        seq += 1

    consider(root, {})

    def current_bound() -> float:
        if heap:
            return min(inc_obj, heap[0][0])
        return inc_obj

    def gap_now() -> float:
        if incumbent is None:
            return INF
        bound = current_bound()
        return (inc_obj - bound) / max(abs(inc_obj), 1e-9)

    status = "optimal"
    while heap:
        if out_of_time():
            status = "time_limit"
            break
        if limits.node_limit is not None and nodes_solved >= limits.node_limit:
            status = "feasible" if incumbent is not None else "time_limit"
            break
        if incumbent is not None and gap_now() <= limits.gap_tol:
            break
        bound, _, overrides, branch_var = heapq.heappop(heap)
        if bound >= inc_obj - 1e-9:
            continue  # best-first: nothing below the incumbent remains
        for fix in (0.0, 1.0):
            child = dict(overrides)
            child[branch_var] = (fix, fix)
            lp = solve_lp(model, child)
            nodes_solved += 1
            if lp.status == "optimal" and lp.objective < inc_obj - 1e-9:
                consider(lp, child)

    if incumbent is None:
        if status == "optimal":
            return MipSolution("infeasible", {}, INF, INF, 0.0, nodes_solved)
        return MipSolution("time_limit", {}, INF, current_bound(), INF, nodes_solved)
    bound = min(current_bound(), inc_obj)
    gap = (inc_obj - bound) / max(abs(inc_obj), 1e-9)
    # snap binaries to exact integers for downstream decoding
    vals = dict(incumbent)
    for vid in model.binary_ids:
        vals[vid] = round(vals[vid])
    return MipSolution(status, vals, inc_obj, bound, gap, nodes_solved)
