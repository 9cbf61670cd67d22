"""Bounded-variable primal simplex for small and medium dense LPs.

Two-phase revised simplex on an explicit basis inverse (refactorized
periodically). Pricing is Dantzig's rule, switching to Bland's rule after a
streak of degenerate pivots so the method cannot cycle. Output is
deterministic for a fixed input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

INF = math.inf
RELATIONS = ("<=", "=", ">=")


class IterationLimitError(RuntimeError):
    pass


@dataclass
class Constraint:
    coeffs: dict[int, float]
    relation: str
    rhs: float
    name: str


@dataclass
class LpProblem:
    """min c.x + obj_const  s.t. rows, lb <= x <= ub."""
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    c: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    rows: list[Constraint] = field(default_factory=list)
    obj_const: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.c)

    def add_var(self, lb: float = 0.0, ub: float = INF, cost: float = 0.0,
                name: Optional[str] = None) -> int:
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.c.append(float(cost))
        self.names.append(name or f"x{len(self.c) - 1}")
        return len(self.c) - 1

    def add_constraint(self, coeffs: Mapping[int, float], relation: str, rhs: float,
                       name: Optional[str] = None) -> int:
        if relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}, got {relation!r}")
        merged: dict[int, float] = {}
        for j, v in coeffs.items():
            if v != 0.0:
                merged[int(j)] = merged.get(int(j), 0.0) + float(v)
        self.rows.append(Constraint(merged, relation, float(rhs), name or f"c{len(self.rows)}"))
        return len(self.rows) - 1

    def check(self) -> None:
        for j, (lo, hi) in enumerate(zip(self.lb, self.ub)):
            if lo > hi or lo == INF or hi == -INF or math.isnan(lo) or math.isnan(hi):
                raise ValueError(f"variable {self.names[j]}: inconsistent bounds [{lo}, {hi}]")
        for row in self.rows:
            if not math.isfinite(row.rhs):
                raise ValueError(f"constraint {row.name}: rhs must be finite")
            if any(j < 0 or j >= self.n_vars for j in row.coeffs):
                raise ValueError(f"constraint {row.name}: unknown variable index")

    def dense(self) -> np.ndarray:
        A = np.zeros((len(self.rows), self.n_vars))
        for i, row in enumerate(self.rows):
            for j, v in row.coeffs.items():
                A[i, j] = v
        return A

    def activity(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([sum(v * x[j] for j, v in row.coeffs.items()) for row in self.rows])

    def to_text(self) -> str:
        """One line per item: objective, then ``name: coeffs relation rhs``, then bounds."""
        def terms(pairs):
            out = " ".join(f"{v:+.17g} {self.names[j]}" for j, v in pairs)
            return out or "0"
        lines = ["minimize: " + terms((j, v) for j, v in enumerate(self.c) if v != 0.0)
                 + (f" {self.obj_const:+.17g}" if self.obj_const else "")]
        for row in self.rows:
            lines.append(f"{row.name}: {terms(sorted(row.coeffs.items()))} {row.relation} "
                         f"{row.rhs:.17g}")
        for j, name in enumerate(self.names):
            lines.append(f"bounds: {self.lb[j]:.17g} <= {name} <= {self.ub[j]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    binding: Optional[np.ndarray] = None
    iterations: int = 0
    dual_objective: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------

class _Simplex:
    """Revised bounded simplex on  A x = b, 0 <= x <= u, b >= 0."""

    def __init__(self, A, b, u, basis, feas_tol, opt_tol, max_iter, refactor_every=50,
                 degenerate_streak=30):
        self.A = A
        self.b = b
        self.u = u
        self.m, self.n = A.shape
        self.basis = list(basis)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.degenerate_streak = degenerate_streak
        self.iterations = 0
        self.blocked = np.zeros(self.n, dtype=bool)
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self._since_refactor = 0
        self._recompute_xb()

    def _recompute_xb(self):
        rhs = self.b - self.A[:, self.at_upper] @ self.u[self.at_upper]
        self.xB = self.Binv @ rhs

    def x(self) -> np.ndarray:
        x = np.where(self.at_upper, self.u, 0.0)
        x[self.basis] = self.xB
        return x

    def run(self, c: np.ndarray) -> str:
        cscale = float(np.max(np.abs(c))) if np.any(c) else 1.0
        dtol = self.opt_tol * cscale
        degenerate = 0
        in_basis = np.zeros(self.n, dtype=bool)
        while True:
            if self.iterations >= self.max_iter:
                raise IterationLimitError(f"simplex exceeded {self.max_iter} iterations")
            in_basis[:] = False
            in_basis[self.basis] = True
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            movable = ~in_basis & ~self.blocked & (self.u > 0)
            improve_up = movable & ~self.at_upper & (d < -dtol)
            improve_dn = movable & self.at_upper & (d > dtol)
            cand = improve_up | improve_dn
            if not cand.any():
                return "optimal"
            use_bland = degenerate >= self.degenerate_streak
            if use_bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            sigma = 1.0 if improve_up[q] else -1.0
            w = self.Binv @ self.A[:, q]
            sw = sigma * w
            theta = self.u[q]  # bound flip distance
            leave = -1
            leave_to_upper = False
            ptol = 1e-11
            uB = self.u[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = sw > ptol
                t_dec = np.where(dec, np.maximum(self.xB, 0.0) / np.where(dec, sw, 1.0), INF)
                inc = (sw < -ptol) & np.isfinite(uB)
                t_inc = np.where(inc, np.maximum(uB - self.xB, 0.0) / np.where(inc, -sw, 1.0), INF)
            t_row = np.minimum(t_dec, t_inc)
            t_min = float(np.min(t_row)) if self.m else INF
            if t_min < theta:
                # among near-ties take the largest pivot (or smallest basis index under Bland)
                ties = np.flatnonzero(t_row <= t_min + 1e-12 * max(1.0, t_min))
                if use_bland:
                    leave = int(min(ties, key=lambda i: self.basis[i]))
                else:
                    leave = int(ties[np.argmax(np.abs(w[ties]))])
                theta = float(t_row[leave])
                leave_to_upper = bool(t_inc[leave] <= t_dec[leave])
            if not math.isfinite(theta):
                return "unbounded"
            self.iterations += 1
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            self.xB = self.xB - theta * sw
            if leave < 0:
                self.at_upper[q] = not self.at_upper[q]
                continue
            entering_value = (0.0 if sigma > 0 else self.u[q]) + sigma * theta
            out = self.basis[leave]
            self.at_upper[out] = leave_to_upper
            self.basis[leave] = q
            self.at_upper[q] = False
            piv = w[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[leave] = row
            self.xB[leave] = entering_value
            self._since_refactor += 1
            if self._since_refactor >= self.refactor_every:
                self._refactor()


def solve_lp(p: LpProblem, feas_tol: float = 1e-8, opt_tol: float = 1e-9,
             max_iter: int = 100_000) -> LpSolution:
    """Solve ``p``; infeasible and unbounded come back as statuses, not exceptions."""
    p.check()
    n0 = p.n_vars
    lb = np.array(p.lb, dtype=float)
    ub = np.array(p.ub, dtype=float)
    c0 = np.array(p.c, dtype=float)
    A0 = p.dense() if p.rows else np.zeros((0, n0))
    rhs0 = np.array([row.rhs for row in p.rows], dtype=float)

    # map each original variable onto nonnegative internal columns:
    # x = shift + sum(sign * x_internal)
    cols: list[tuple[int, float]] = []  # (original index, sign)
    shift = np.zeros(n0)
    upper: list[float] = []
    for j in range(n0):
        if math.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
            upper.append(ub[j] - lb[j])
        elif math.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
            upper.append(INF)
        else:
            cols.append((j, 1.0))
            upper.append(INF)
            cols.append((j, -1.0))
            upper.append(INF)
    m = len(p.rows)
    n_int = len(cols)
    Aint = np.zeros((m, n_int))
    cint = np.zeros(n_int)
    for k, (j, s) in enumerate(cols):
        Aint[:, k] = s * A0[:, j]
        cint[k] = s * c0[j]
    b = rhs0 - A0 @ shift

    # slacks
    slack_cols = []
    for i, row in enumerate(p.rows):
        if row.relation == "<=":
            slack_cols.append((i, 1.0))
        elif row.relation == ">=":
            slack_cols.append((i, -1.0))
    S = np.zeros((m, len(slack_cols)))
    for k, (i, s) in enumerate(slack_cols):
        S[i, k] = s
    A = np.hstack([Aint, S])
    u = np.concatenate([np.array(upper), np.full(len(slack_cols), INF)])
    row_sign = np.where(b < 0, -1.0, 1.0)
    A = A * row_sign[:, None]
    b = b * row_sign

    # initial basis: a +1 slack where available, otherwise an artificial
    basis = [-1] * m
    for k, (i, _) in enumerate(slack_cols):
        if A[i, n_int + k] > 0 and basis[i] < 0:
            basis[i] = n_int + k
    art_rows = [i for i in range(m) if basis[i] < 0]
    n_struct = A.shape[1]
    Art = np.zeros((m, len(art_rows)))
    for k, i in enumerate(art_rows):
        Art[i, k] = 1.0
        basis[i] = n_struct + k
    A = np.hstack([A, Art])
    u = np.concatenate([u, np.full(len(art_rows), INF)])
    n_all = A.shape[1]

    if m == 0:
        # only bounds: each variable sits at whichever bound its cost prefers
        x = np.zeros(n_all)
        for k in range(n_all):
            if cint[k] < 0:
                if not math.isfinite(u[k]):
                    return LpSolution("unbounded")
                x[k] = u[k]
        return _finish(p, cols, shift, x[:n_int], np.zeros(0), feas_tol, opt_tol, 0)

    sx = _Simplex(A, b, u, basis, feas_tol, opt_tol, max_iter)
    art_start = n_struct
    if art_rows:
        c1 = np.zeros(n_all)
        c1[art_start:] = 1.0
        sx.run(c1)
        infeas = float(np.sum(sx.x()[art_start:]))
        if infeas > feas_tol * (1.0 + float(np.max(np.abs(b)))):
            return LpSolution("infeasible", iterations=sx.iterations)
    # artificials may stay basic at zero; pin them there
    sx.u = u.copy()
    sx.u[art_start:] = 0.0
    sx.blocked[art_start:] = True
    sx._recompute_xb()
    c2 = np.zeros(n_all)
    c2[:n_int] = cint
    status = sx.run(c2)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=sx.iterations)
    sx._refactor()
    y = (c2[sx.basis] @ sx.Binv) * row_sign
    return _finish(p, cols, shift, sx.x()[:n_int], y, feas_tol, opt_tol, sx.iterations)


def _finish(p, cols, shift, xint, y, feas_tol, opt_tol, iterations) -> LpSolution:
    x = shift.copy()
    for k, (j, s) in enumerate(cols):
        x[j] += s * xint[k]
    lb = np.array(p.lb)
    ub = np.array(p.ub)
    x = np.minimum(np.maximum(x, lb), ub)
    c = np.array(p.c)
    obj = float(c @ x) + p.obj_const
    act = p.activity(x)
    rhs = np.array([row.rhs for row in p.rows])
    binding = np.abs(act - rhs) <= feas_tol * (1.0 + np.abs(rhs))
    # dual objective from row duals and bound multipliers
    A = p.dense() if p.rows else np.zeros((0, len(c)))
    d = c - (y @ A if len(y) else 0.0)
    dual_obj = float(y @ rhs) + p.obj_const if len(y) else p.obj_const
    dtol = opt_tol * max(1.0, float(np.max(np.abs(c))) if len(c) else 1.0)
    for j in range(len(c)):
        if abs(d[j]) <= dtol:
            continue
        if d[j] > 0:
            dual_obj += d[j] * lb[j] if math.isfinite(lb[j]) else INF
        else:
            dual_obj += d[j] * ub[j] if math.isfinite(ub[j]) else -INF
    return LpSolution("optimal", x, obj, y, binding, iterations, dual_obj)


# ---------------------------------------------------------------------------
# convex piecewise-linear costs

@dataclass
class PwlFragment:
    """Segment variables added for each cost curve; output_i = offset_i + sum(segments_i)."""
    problem: LpProblem
    segments: list[list[int]]
    offsets: list[float]

    def output(self, x, i: int) -> float:
        return self.offsets[i] + float(sum(x[j] for j in self.segments[i]))

    def coeffs(self, i: int, scale: float = 1.0) -> dict[int, float]:
        return {j: scale for j in self.segments[i]}


def piecewise_linear_to_lp(curves: Sequence[tuple[float, Sequence[tuple[float, float]]]],
                           problem: Optional[LpProblem] = None,
                           prefix: str = "seg") -> PwlFragment:
    """Add one bounded segment variable per breakpoint interval of each curve.

    ``curves`` holds ``(start_mw, [(segment_end_mw, marginal_price), ...])``.
    Marginal prices must be nondecreasing; otherwise cheaper later segments
    would fill first and the LP would misprice the curve.
    """
    prob = problem if problem is not None else LpProblem()
    segments, offsets = [], []
    for i, (start, curve) in enumerate(curves):
        prices = [pr for _, pr in curve]
        if any(a > b for a, b in zip(prices, prices[1:])):
            raise ValueError(f"cost curve {i} is not convex (marginal prices decrease)")
        idx, lo = [], float(start)
        for k, (end, price) in enumerate(curve):
            width = float(end) - lo
            if width < 0:
                raise ValueError(f"cost curve {i}: breakpoints must increase")
            idx.append(prob.add_var(0.0, width, float(price), f"{prefix}{i}_{k}"))
            lo = float(end)
        segments.append(idx)
        offsets.append(float(start))
    return PwlFragment(prob, segments, offsets)


def pwl_cost(start: float, curve: Sequence[tuple[float, float]], g: float) -> float:
    total, lo = 0.0, float(start)
    for end, price in curve:
        if g <= lo:
            break
        total += (min(g, end) - lo) * price
        lo = end
    return total
