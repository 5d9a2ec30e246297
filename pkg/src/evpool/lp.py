"""Sparse linear programming: exact, deterministic solves for the scenario
approximation.

The solver is a bounded-variable two-phase revised simplex over a sparse
column representation with a dense basis inverse maintained by product-form
updates. Pricing is Dantzig (most violated reduced cost) with Bland's rule
engaged after a streak of degenerate pivots, which makes termination
unconditional. Identical programs yield identical solutions: every choice
in the pivot sequence is deterministic.

Tolerances: feasibility 1e-9 relative to row norm, reduced-cost optimality
1e-9 relative to objective scale, pivot threshold 1e-10. Inputs here are
kWh quantities of order 1-1e3, so double precision leaves ample headroom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend

_REL_ALIASES = {"<=": "<=", ">=": ">=", "=": "=", "==": "="}

# Nonbasic/basic variable states.
_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2
_FREE = 3

_PIV_TOL = 1e-10
_FEAS_TOL = 1e-9


@dataclass
class LinearProgram:
    """A linear program: min c'x subject to rows and variable bounds.

    Rows are stored sparsely as (indices, values, relation, rhs) with
    relation one of "<=", ">=", "=". Bounds default to [0, +inf); an absent
    upper bound is +inf, and a -inf lower bound makes the variable free on
    that side.
    """

    n_vars: int
    objective: np.ndarray = None
    rows: list = field(default_factory=list)
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        if self.n_vars < 1:
            raise ValueError("LP needs at least one variable")
        if self.objective is None:
            self.objective = np.zeros(self.n_vars)
        self.objective = np.asarray(self.objective, dtype=np.float64)
        if self.lower is None:
            self.lower = np.zeros(self.n_vars)
        if self.upper is None:
            self.upper = np.full(self.n_vars, np.inf)
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)

    def set_objective(self, coeffs: dict[int, float]) -> None:
        for j, v in coeffs.items():
            self.objective[j] = v

    def set_bounds(self, j: int, lower: float, upper: float | None) -> None:
        self.lower[j] = lower
        self.upper[j] = np.inf if upper is None else upper

    def add_constraint(self, coeffs, relation: str, rhs: float) -> None:
        """Append a sparse row. coeffs: {index: value} or (indices, values)."""
        if relation not in _REL_ALIASES:
            raise ValueError(f"unknown relation {relation!r}")
        relation = _REL_ALIASES[relation]
        if isinstance(coeffs, dict):
            idx = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
            val = np.fromiter(coeffs.values(), dtype=np.float64, count=len(coeffs))
        else:
            idx = np.asarray(coeffs[0], dtype=np.int64)
            val = np.asarray(coeffs[1], dtype=np.float64)
        if idx.size != np.unique(idx).size:
            # merge duplicate indices so downstream code sees canonical rows
            order = np.argsort(idx, kind="stable")
            idx, val = idx[order], val[order]
            uniq, start = np.unique(idx, return_index=True)
            val = np.add.reduceat(val, start)
            idx = uniq
        keep = val != 0.0
        self.rows.append((idx[keep], val[keep], relation, float(rhs)))

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective has non-finite coefficients")
        if self.lower.shape != (self.n_vars,) or self.upper.shape != (self.n_vars,):
            raise ValueError("bounds length must equal n_vars")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds contain NaN")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        for k, (idx, val, rel, rhs) in enumerate(self.rows):
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
                raise ValueError(f"row {k} references a variable out of range")
            if not np.all(np.isfinite(val)) or not math.isfinite(rhs):
                raise ValueError(f"row {k} has non-finite coefficients")


@dataclass
class LpSolution:
    """Outcome of a solve: status in {optimal, infeasible, unbounded}.

    For optimal solves, values/objective_value are the vertex reached,
    dual_values the row multipliers y = c_B B^{-1}, and dual_bound the
    certified lower bound y'b + sum_j min over [l_j, u_j] of (c_j - y'A_j) x_j
    (a valid bound for any y, used by the weak-duality checks).
    """

    status: str
    values: np.ndarray | None = None
    objective_value: float | None = None
    dual_values: np.ndarray | None = None
    dual_bound: float | None = None
    n_iterations: int = 0


@dataclass
class Violation:
    kind: str  # "row", "lower" or "upper"
    index: int
    magnitude: float


@dataclass
class FeasibilityReport:
    violations: list

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def max_violation(self) -> float:
        return max((v.magnitude for v in self.violations), default=0.0)


class _BoundedSimplex:
    """Revised simplex engine over sparse columns with a dense basis inverse.

    Rows are equalities; callers add slack columns for inequalities.
    Columns may be appended after an optimal solve; the basis stays valid
    and solve() continues from it (used for delayed column generation).
    """

    def __init__(self, b: np.ndarray):
        self.b = np.asarray(b, dtype=np.float64)
        self.m = self.b.size
        self.col_idx: list[np.ndarray] = []
        self.col_val: list[np.ndarray] = []
        self.cost: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_artificial: list[bool] = []
        self.slack_of_row: dict[int, int] = {}
        self._flat_dirty = True
        self.basis: np.ndarray | None = None
        self.vstat: np.ndarray | None = None
        self.xB: np.ndarray | None = None
        self.binv: np.ndarray | None = None
        self.iterations = 0

    # -- construction ---------------------------------------------------

    def add_variable(self, rows, vals, cost: float, lower: float, upper: float,
                     artificial: bool = False) -> int:
        j = len(self.cost)
        ridx = np.asarray(rows, dtype=np.int64)
        rval = np.asarray(vals, dtype=np.float64)
        keep = rval != 0.0
        self.col_idx.append(ridx[keep])
        self.col_val.append(rval[keep])
        self.cost.append(float(cost))
        self.lb.append(float(lower))
        self.ub.append(float(upper))
        self.is_artificial.append(artificial)
        self._flat_dirty = True
        if self.vstat is not None:
            # appended after a solve: enters nonbasic at its reference value
            self.vstat = np.append(self.vstat, self._init_state(j))
            start = self._start_value(j, self.vstat[j])
            if start != 0.0 and self.col_idx[j].size:
                w = self.binv[:, self.col_idx[j]] @ self.col_val[j]
                self.xB -= start * w
        return j

    def add_slack(self, row: int, coef: float) -> int:
        j = self.add_variable([row], [coef], 0.0, 0.0, np.inf)
        self.slack_of_row[row] = j
        return j

    @property
    def ncols(self) -> int:
        return len(self.cost)

    def _init_state(self, j: int) -> int:
        if math.isfinite(self.lb[j]):
            return _AT_LOWER
        if math.isfinite(self.ub[j]):
            return _AT_UPPER
        return _FREE

    def _start_value(self, j: int, state: int) -> float:
        if state == _AT_LOWER:
            return self.lb[j]
        if state == _AT_UPPER:
            return self.ub[j]
        return 0.0

    def _flatten(self) -> None:
        if not self._flat_dirty:
            return
        n = self.ncols
        lens = np.array([c.size for c in self.col_idx], dtype=np.int64)
        self.flat_ptr = np.concatenate(([0], np.cumsum(lens)))
        if n:
            self.flat_row = np.concatenate(self.col_idx) if self.flat_ptr[-1] else np.empty(0, np.int64)
            self.flat_val = np.concatenate(self.col_val) if self.flat_ptr[-1] else np.empty(0, np.float64)
        else:
            self.flat_row = np.empty(0, np.int64)
            self.flat_val = np.empty(0, np.float64)
        self.flat_col = np.repeat(np.arange(n, dtype=np.int64), lens)
        self.c_arr = np.array(self.cost)
        self.lb_arr = np.array(self.lb)
        self.ub_arr = np.array(self.ub)
        self._flat_dirty = False

    # -- linear algebra helpers ------------------------------------------

    def _nonbasic_values(self) -> np.ndarray:
        x = np.where(self.vstat == _AT_UPPER, self.ub_arr, self.lb_arr)
        x[self.vstat == _FREE] = 0.0
        x[self.vstat == _BASIC] = 0.0
        x[~np.isfinite(x)] = 0.0
        return x

    def _refactor(self) -> None:
        self._flatten()
        m = self.m
        B = np.zeros((m, m))
        for pos, j in enumerate(self.basis):
            B[self.col_idx[j], pos] = self.col_val[j]
        self.binv = np.linalg.inv(B)
        xn = self._nonbasic_values()
        resid = self.b - np.bincount(
            self.flat_row, weights=self.flat_val * xn[self.flat_col], minlength=m
        )
        self.xB = self.binv @ resid

    def _col_dense(self, j: int) -> np.ndarray:
        w = np.zeros(self.m)
        w[self.col_idx[j]] = self.col_val[j]
        return w

    def _ftran(self, j: int) -> np.ndarray:
        idx = self.col_idx[j]
        if idx.size == 0:
            return np.zeros(self.m)
        return self.binv[:, idx] @ self.col_val[j]

    # -- simplex core -----------------------------------------------------

    def _prepare_initial_basis(self) -> bool:
        """Choose slack columns as the starting basis where signs allow;
        fill the rest with artificials. Returns True if phase 1 is needed."""
        self._flatten()
        self.vstat = np.array([self._init_state(j) for j in range(self.ncols)],
                              dtype=np.int8)
        xn = self._nonbasic_values()
        resid = self.b - np.bincount(
            self.flat_row, weights=self.flat_val * xn[self.flat_col], minlength=self.m
        )
        basis = np.empty(self.m, dtype=np.int64)
        need_artificial = False
        for k in range(self.m):
            j = self.slack_of_row.get(k)
            if j is not None:
                coef = self.col_val[j][0] if self.col_val[j].size else 0.0
                if coef != 0.0 and resid[k] / coef >= -1e-12:
                    basis[k] = j
                    self.vstat[j] = _BASIC
                    continue
            sign = 1.0 if resid[k] >= 0 else -1.0
            # add_variable appends the new column's vstat entry itself
            a = self.add_variable([k], [sign], 0.0, 0.0, np.inf, artificial=True)
            basis[k] = a
            self.vstat[a] = _BASIC
            need_artificial = True
        self.basis = basis
        self._flatten()
        self._refactor()
        return need_artificial

    def _iterate(self, costs: np.ndarray, max_iter: int) -> str:
        self._flatten()
        m = self.m
        tol_d = 1e-9 * max(1.0, float(np.abs(costs).max(initial=0.0)))
        bland = False
        streak = 0
        since_refactor = 0
        enterable = self.ub_arr - self.lb_arr > 0
        for _ in range(max_iter):
            self.iterations += 1
            y = costs[self.basis] @ self.binv if m else np.zeros(0)
            dots = np.bincount(
                self.flat_col, weights=self.flat_val * y[self.flat_row],
                minlength=self.ncols,
            )
            rc = costs - dots
            viol = np.full(self.ncols, -np.inf)
            sel = (self.vstat == _AT_LOWER) & enterable
            viol[sel] = -rc[sel]
            sel = (self.vstat == _AT_UPPER) & enterable
            viol[sel] = rc[sel]
            sel = self.vstat == _FREE
            viol[sel] = np.abs(rc[sel])
            if bland:
                cand = np.nonzero(viol > tol_d)[0]
                if cand.size == 0:
                    return "optimal"
                j = int(cand[0])
            else:
                j = int(np.argmax(viol))
                if viol[j] <= tol_d:
                    return "optimal"
            state = self.vstat[j]
            if state == _AT_LOWER:
                t = 1.0
            elif state == _AT_UPPER:
                t = -1.0
            else:
                t = 1.0 if rc[j] < 0 else -1.0

            w = self._ftran(j)
            d = t * w
            lbB = self.lb_arr[self.basis]
            ubB = self.ub_arr[self.basis]
            ratios = np.full(m, np.inf)
            pos = d > _PIV_TOL
            neg = d < -_PIV_TOL
            with np.errstate(invalid="ignore"):
                ratios[pos] = (self.xB[pos] - lbB[pos]) / d[pos]
                ratios[neg] = (self.xB[neg] - ubB[neg]) / d[neg]
            ratios[~np.isfinite(ratios)] = np.inf
            np.maximum(ratios, 0.0, out=ratios)
            theta_row = ratios.min() if m else np.inf
            rng_j = self.ub_arr[j] - self.lb_arr[j]
            theta_bound = rng_j if (state != _FREE and math.isfinite(rng_j)) else np.inf

            if theta_row == np.inf and theta_bound == np.inf:
                return "unbounded"

            if theta_bound <= theta_row:
                # bound flip: the entering variable crosses to its other bound
                self.xB -= theta_bound * d
                self.vstat[j] = _AT_UPPER if state == _AT_LOWER else _AT_LOWER
                theta = theta_bound
            else:
                near = ratios <= theta_row + 1e-10 * (1.0 + theta_row)
                rows = np.nonzero(near)[0]
                if bland:
                    r = int(rows[np.argmin(self.basis[rows])])
                else:
                    r = int(rows[np.argmax(np.abs(d[rows]))])
                theta = ratios[r]
                xj = self._start_value(j, state) + t * theta
                self.xB -= theta * d
                leave = self.basis[r]
                self.vstat[leave] = _AT_LOWER if d[r] > 0 else _AT_UPPER
                self.basis[r] = j
                self.vstat[j] = _BASIC
                self.xB[r] = xj
                backend.eta_update(self.binv, w, r)
                since_refactor += 1
                if since_refactor >= 64:
                    self._refactor()
                    since_refactor = 0

            if theta <= 1e-11:
                streak += 1
                if streak >= 30:
                    bland = True
            else:
                # real progress: revert to Dantzig pricing. Safe: a stall
                # at one vertex only grows the streak, so Bland re-engages
                # there and escapes it, and strict objective decrease
                # forbids revisiting any earlier state.
                streak = 0
                bland = False
        raise RuntimeError("simplex iteration limit exceeded")

    def _drive_out_artificials(self) -> None:
        self._flatten()
        art = np.array(self.is_artificial)
        for r in range(self.m):
            j = self.basis[r]
            if not art[j]:
                continue
            u = self.binv[r]
            prods = np.bincount(
                self.flat_col, weights=self.flat_val * u[self.flat_row],
                minlength=self.ncols,
            )
            cand = np.nonzero(
                (np.abs(prods) > 1e-8) & ~art & (self.vstat != _BASIC)
            )[0]
            if cand.size:
                e = int(cand[0])
                w = self._ftran(e)
                xe = self._start_value(e, self.vstat[e])
                self.basis[r] = e
                self.vstat[e] = _BASIC
                self.vstat[j] = _AT_LOWER
                self.xB[r] = xe
                backend.eta_update(self.binv, w, r)
            # else: the row is redundant; the artificial stays basic at 0,
            # pinned there by its [0, 0] bounds in phase 2.

    def solve(self, max_iter: int | None = None) -> str:
        if max_iter is None:
            max_iter = 5000 + 100 * (self.m + self.ncols)
        if self.basis is None:
            need_phase1 = self._prepare_initial_basis()
            if need_phase1:
                phase1 = np.array(
                    [1.0 if a else 0.0 for a in self.is_artificial]
                )
                status = self._iterate(phase1, max_iter)
                if status != "optimal":
                    raise RuntimeError("phase 1 terminated " + status)
                art_vals = self.xB[np.array(self.is_artificial)[self.basis]]
                obj1 = float(art_vals.sum()) if art_vals.size else 0.0
                scale = max(1.0, float(np.abs(self.b).max(initial=0.0)))
                if obj1 > 1e-7 * scale:
                    return "infeasible"
                self._drive_out_artificials()
            for j in range(self.ncols):
                if self.is_artificial[j]:
                    self.ub[j] = 0.0
            self._flat_dirty = True
        self._flatten()
        return self._iterate(self.c_arr, max_iter)

    # -- extraction -------------------------------------------------------

    def values(self) -> np.ndarray:
        x = self._nonbasic_values()
        x[self.basis] = self.xB
        return x

    def duals(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return self.c_arr[self.basis] @ self.binv

    def objective(self) -> float:
        return float(self.c_arr @ self.values())


def _to_engine(program: LinearProgram) -> _BoundedSimplex:
    m = program.n_rows
    b = np.array([row[3] for row in program.rows])
    eng = _BoundedSimplex(b)
    # structural variables first, in order, so eng.values()[:n_vars] maps back
    entries: list[list] = [[] for _ in range(program.n_vars)]
    for k, (idx, val, _rel, _rhs) in enumerate(program.rows):
        for i, v in zip(idx, val):
            entries[int(i)].append((k, float(v)))
    for j in range(program.n_vars):
        rows = [e[0] for e in entries[j]]
        vals = [e[1] for e in entries[j]]
        eng.add_variable(rows, vals, program.objective[j],
                         program.lower[j], program.upper[j])
    for k, (_idx, _val, rel, _rhs) in enumerate(program.rows):
        if rel == "<=":
            eng.add_slack(k, 1.0)
        elif rel == ">=":
            eng.add_slack(k, -1.0)
    return eng


def _dual_bound(program: LinearProgram, eng: _BoundedSimplex, y: np.ndarray) -> float:
    """Lower bound on the optimum valid for any y (weak duality with bounds)."""
    eng._flatten()
    dots = np.bincount(
        eng.flat_col, weights=eng.flat_val * y[eng.flat_row], minlength=eng.ncols
    )
    rc = eng.c_arr - dots
    art = np.array(eng.is_artificial)
    lo = eng.lb_arr.copy()
    hi = eng.ub_arr.copy()
    bound = float(y @ eng.b)
    with np.errstate(invalid="ignore"):
        contrib = np.where(rc > 1e-12, rc * lo,
                           np.where(rc < -1e-12, rc * hi, 0.0))
    contrib[art] = 0.0
    contrib = np.where(np.isnan(contrib), -np.inf, contrib)
    return bound + float(contrib.sum())


def solve_lp(program: LinearProgram) -> LpSolution:
    """Solve min c'x subject to the program's rows and bounds.

    Returns status "optimal" with a vertex solution, or "infeasible" /
    "unbounded"; solver failures on well-formed input raise rather than
    mislabel. Deterministic: identical programs give identical solutions.
    """
    program.validate()
    eng = _to_engine(program)
    status = eng.solve()
    if status != "optimal":
        return LpSolution(status=status, n_iterations=eng.iterations)
    x = eng.values()[: program.n_vars]
    y = eng.duals()
    sol = LpSolution(
        status="optimal",
        values=x,
        objective_value=float(program.objective @ x),
        dual_values=y,
        dual_bound=_dual_bound(program, eng, y),
        n_iterations=eng.iterations,
    )
    report = check_feasibility(program, x, tol=1e-7)
    if not report.feasible:
        raise RuntimeError(
            f"solver returned an infeasible point (max violation "
            f"{report.max_violation:.3e}); input likely ill-conditioned"
        )
    return sol


def check_feasibility(program: LinearProgram, values, tol: float = _FEAS_TOL
                      ) -> FeasibilityReport:
    """Signed violation report for a candidate point.

    A row counts as violated when its signed violation exceeds
    tol * max(1, ||row||_2); bounds use tol * max(1, |bound|). The report
    is empty iff the point is feasible within those tolerances.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.shape != (program.n_vars,):
        raise ValueError(
            f"values length {x.shape} does not match n_vars={program.n_vars}"
        )
    out: list[Violation] = []
    for k, (idx, val, rel, rhs) in enumerate(program.rows):
        act = float(val @ x[idx]) if idx.size else 0.0
        if rel == "<=":
            viol = act - rhs
        elif rel == ">=":
            viol = rhs - act
        else:
            viol = abs(act - rhs)
        row_norm = float(np.sqrt((val * val).sum())) if idx.size else 0.0
        if viol > tol * max(1.0, row_norm):
            out.append(Violation("row", k, viol))
    for j in range(program.n_vars):
        lo, hi = program.lower[j], program.upper[j]
        if math.isfinite(lo) and x[j] < lo - tol * max(1.0, abs(lo)):
            out.append(Violation("lower", j, lo - x[j]))
        if math.isfinite(hi) and x[j] > hi + tol * max(1.0, abs(hi)):
            out.append(Violation("upper", j, x[j] - hi))
    return FeasibilityReport(out)


def dump_lp(program: LinearProgram) -> str:
    """Plain-text dump (one constraint per line, index:coefficient pairs)
    for differential testing against external solvers."""
    lines = [f"vars {program.n_vars}"]
    obj = " ".join(
        f"{j}:{program.objective[j]:.17g}"
        for j in range(program.n_vars)
        if program.objective[j] != 0.0
    )
    lines.append(f"min {obj}")
    for j in range(program.n_vars):
        lines.append(f"bnd {j} {program.lower[j]:.17g} {program.upper[j]:.17g}")
    for idx, val, rel, rhs in program.rows:
        body = " ".join(f"{int(i)}:{v:.17g}" for i, v in zip(idx, val))
        lines.append(f"row {rel} {rhs:.17g} {body}")
    return "\n".join(lines) + "\n"
