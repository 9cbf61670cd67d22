"""Energy and reserve co-optimization over a DC network.

Three variants differ only in their reserve requirement:

* ``A``: equivalency-ratio requirement  sum(R) + alpha(M) sum(b) >= upsilon(M)
* ``B``: sum(r) + sum(b) >= L  with  r_i <= kappa_i h(M, sum(b_hat))
* ``C``: ``B`` plus  r_i <= R_i / alpha(M)

``h`` is evaluated at a fixed FFR estimate ``b_hat`` (default ``b_bar``), so
every variant is an LP.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .lp import LpProblem, LpSolution, piecewise_linear_to_lp, solve_lp
from .model import Allocation, Network, Scenario, ScenarioError, validate_scenario
from .requirements import (DomainError, EquivalencyTable, equivalency_params,
                           limit_function_h)

VARIANTS = ("A", "B", "C")


class NetworkError(ValueError):
    pass


def ptdf_matrix(net: Network, slack: int = 0) -> np.ndarray:
    """Line-by-bus shift factors; the slack bus column is zero."""
    n = int(net.n_buses)
    if not 0 <= slack < n:
        raise NetworkError(f"slack bus {slack} out of range")
    nl = len(net.lines)
    Bbus = np.zeros((n, n))
    inc = np.zeros((nl, n))
    bvec = np.zeros(nl)
    for k, ln in enumerate(net.lines):
        f, t, b = ln.from_bus, ln.to_bus, ln.susceptance
        if b <= 0:
            raise NetworkError(f"line {k}: susceptance must be positive")
        Bbus[f, f] += b
        Bbus[t, t] += b
        Bbus[f, t] -= b
        Bbus[t, f] -= b
        inc[k, f] = 1.0
        inc[k, t] = -1.0
        bvec[k] = b
    keep = [i for i in range(n) if i != slack]
    Bred = Bbus[np.ix_(keep, keep)]
    X = np.zeros((n, n))
    if keep:
        if np.linalg.matrix_rank(Bred) < len(keep):
            raise NetworkError("reduced susceptance matrix is singular (network disconnected)")
        X[np.ix_(keep, keep)] = np.linalg.inv(Bred)
    return (bvec[:, None] * inc) @ X


def line_flows(net: Network, injections, slack: int = 0) -> np.ndarray:
    return ptdf_matrix(net, slack) @ np.asarray(injections, dtype=float)


def bus_injections(s: Scenario, G) -> np.ndarray:
    net = s.network
    inj = -np.asarray(net.demand, dtype=float)
    for g, Gi in zip(s.generators, G):
        inj[g.bus] += Gi
    return inj


@dataclass(frozen=True)
class CooptVariant:
    tag: str
    b_hat: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.tag not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.tag!r}")


@dataclass
class CooptModel:
    """An assembled LP plus the column indices needed to decode its solution."""
    problem: LpProblem
    variant: CooptVariant
    M: float
    pfr: list[int]  # generator indices eligible for PFR
    seg: list[list[int]]
    R: dict[int, int]
    r: dict[int, int]
    b: list[int]
    caps: dict[int, float]  # rate-based limit per eligible generator (B/C; reference for A)
    alpha: float
    upsilon: float
    h: Optional[float]
    tiebreak: float


@dataclass
class CooptResult:
    variant: str
    M: float
    status: str
    allocation: Optional[Allocation] = None
    total_cost: Optional[float] = None
    binding: list[str] = field(default_factory=list)
    limits: dict[int, float] = field(default_factory=dict)
    h: Optional[float] = None
    alpha: Optional[float] = None
    lp: Optional[LpSolution] = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def binding_pfr_limits(self, tol: float = 1e-6) -> list[int]:
        if not self.ok or self.variant == "A":
            return []
        return [i for i, lim in self.limits.items()
                if self.allocation.r[i] >= lim - tol * max(1.0, lim)]


def _resolve_b_hat(s: Scenario, v: CooptVariant) -> np.ndarray:
    b_bar = s.b_bar
    if v.b_hat is None:
        return b_bar.copy()
    b_hat = np.asarray(v.b_hat, dtype=float)
    if b_hat.shape != b_bar.shape or np.any(b_hat < 0) or np.any(b_hat > b_bar + 1e-9):
        raise DomainError("b_hat must lie within the FFR caps")
    return b_hat


def build_coopt(s: Scenario, v: CooptVariant, M: float,
                equiv: Optional[EquivalencyTable] = None, fix_b: Optional[bool] = None,
                slack: int = 0, reserve_tiebreak: float = 1e-6,
                include_network: bool = True) -> CooptModel:
    """Assemble the variant's LP at inertia ``M``.

    ``reserve_tiebreak`` ($/MW) is a tiny price on nominal reserve so that,
    among cost-equal optima, no more reserve is held than the requirement
    asks for. ``fix_b`` pins FFR at its cap; by default this happens when all
    FFR is offered at zero price.
    """
    problems = validate_scenario(s)
    if problems:
        raise ScenarioError(problems)
    p = s.params
    gens = s.generators
    b_bar = s.b_bar
    prices = np.array([f.price for f in s.ffr], dtype=float)
    if fix_b is None:
        fix_b = not np.any(prices)
    alpha, upsilon = equivalency_params(M, equiv)
    b_hat = _resolve_b_hat(s, v)

    h = None
    caps: dict[int, float] = {}
    pfr = [i for i, g in enumerate(gens) if g.r_bar > 0]
    if v.tag in ("B", "C"):
        if np.any(prices) and not fix_b:
            warnings.warn("priced FFR: the rate-based limit is evaluated at b_hat and is not "
                          "re-optimized with b", stacklevel=2)
        h = limit_function_h(M, float(np.sum(b_hat)), p)
        caps = {i: gens[i].kappa * h for i in pfr}
    else:
        try:
            h = limit_function_h(M, float(np.sum(b_hat)), p)
            caps = {i: gens[i].kappa * h for i in pfr}
        except DomainError:
            h = None

    prob = LpProblem()
    frag = piecewise_linear_to_lp([(g.g_min, g.cost_curve) for g in gens], prob)
    R_idx = {i: prob.add_var(0.0, gens[i].r_bar, reserve_tiebreak, f"R_{gens[i].id}")
             for i in pfr}
    r_idx: dict[int, int] = {}
    if v.tag in ("B", "C"):
        r_idx = {i: prob.add_var(0.0, caps[i], 0.0, f"r_{gens[i].id}") for i in pfr}
    b_idx = []
    for j, f in enumerate(s.ffr):
        lo = f.b_bar if fix_b else 0.0
        b_idx.append(prob.add_var(lo, f.b_bar, f.price, f"b_{f.id}"))

    # private generator limits: G_i + R_i <= g_max (G_i >= g_min via the segment bounds)
    for i in pfr:
        g = gens[i]
        coeffs = frag.coeffs(i)
        coeffs[R_idx[i]] = 1.0
        prob.add_constraint(coeffs, "<=", g.g_max - g.g_min, f"headroom_{g.id}")

    if v.tag == "A":
        coeffs = {R_idx[i]: 1.0 for i in pfr}
        for j in b_idx:
            coeffs[j] = alpha
        prob.add_constraint(coeffs, ">=", upsilon, "equivalency_requirement")
    else:
        coeffs = {r_idx[i]: 1.0 for i in pfr}
        for j in b_idx:
            coeffs[j] = 1.0
        prob.add_constraint(coeffs, ">=", p.contingency_L, "general_requirement")
        for i in pfr:
            prob.add_constraint({r_idx[i]: 1.0, R_idx[i]: -1.0}, "<=", 0.0,
                                f"available_le_nominal_{gens[i].id}")
        if v.tag == "C":
            for i in pfr:
                prob.add_constraint({r_idx[i]: 1.0, R_idx[i]: -1.0 / alpha}, "<=", 0.0,
                                    f"equivalency_limit_{gens[i].id}")

    _add_network(s, prob, frag, slack, include_network)

    return CooptModel(prob, v, M, pfr, frag.segments, R_idx, r_idx, b_idx, caps,
                      alpha, upsilon, h, reserve_tiebreak)


def solve_dispatch_only(s: Scenario, slack: int = 0, feas_tol: float = 1e-8,
                        opt_tol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Pure economic dispatch (network but no reserve); returns (cost, G).

    Used to tell whether a variant's reserve constraints move the optimum.
    """
    gens = s.generators
    prob = LpProblem()
    frag = piecewise_linear_to_lp([(g.g_min, g.cost_curve) for g in gens], prob)
    _add_network(s, prob, frag, slack)
    sol = solve_lp(prob, feas_tol=feas_tol, opt_tol=opt_tol)
    if not sol.optimal:
        raise RuntimeError(f"economic dispatch {sol.status}")
    G = np.array([frag.output(sol.x, i) for i in range(len(gens))])
    return float(sum(g.cost(Gi) for g, Gi in zip(gens, G))), G


def _add_network(s: Scenario, prob: LpProblem, frag, slack: int,
                 include_network: bool = True) -> None:
    gens = s.generators
    g_min_total = sum(g.g_min for g in gens)
    net = s.network
    demand_total = net.total_demand if net is not None else 0.0
    coeffs = {}
    for i in range(len(gens)):
        coeffs.update(frag.coeffs(i))
    prob.add_constraint(coeffs, "=", demand_total - g_min_total, "power_balance")
    if include_network and net is not None and net.lines:
        S = ptdf_matrix(net, slack)
        base = np.zeros(net.n_buses)
        for g in gens:
            base[g.bus] += g.g_min
        const = S @ (base - np.asarray(net.demand, dtype=float))
        for l, ln in enumerate(net.lines):
            coeffs = {}
            for i, g in enumerate(gens):
                f = S[l, g.bus]
                if f != 0.0:
                    coeffs.update(frag.coeffs(i, f))
            if not coeffs:
                continue
            prob.add_constraint(coeffs, "<=", ln.flow_limit - const[l], f"flow_max_{l}")
            prob.add_constraint(coeffs, ">=", -ln.flow_limit - const[l], f"flow_min_{l}")


def decode(s: Scenario, model: CooptModel, sol: LpSolution) -> CooptResult:
    gens = s.generators
    n = len(gens)
    x = sol.x
    G = np.array([gens[i].g_min + sum(x[j] for j in model.seg[i]) for i in range(n)])
    R = np.zeros(n)
    r = np.zeros(n)
    for i, j in model.R.items():
        R[i] = x[j]
    for i, j in model.r.items():
        r[i] = x[j]
    b = np.array([x[j] for j in model.b])
    cost = sum(g.cost(Gi) for g, Gi in zip(gens, G)) + sum(f.price * bj for f, bj in zip(s.ffr, b))
    binding = [row.name for row, flag in zip(model.problem.rows, sol.binding)
               if flag and row.relation != "="]
    return CooptResult(model.variant.tag, model.M, "optimal", Allocation(G, R, r, b),
                       float(cost), binding, dict(model.caps), model.h, model.alpha, sol)


def solve_coopt(s: Scenario, v: CooptVariant | str, M: float,
                equiv: Optional[EquivalencyTable] = None, feas_tol: float = 1e-8,
                opt_tol: float = 1e-9, **build_kw) -> CooptResult:
    """Build and solve one variant; a non-optimal LP status is returned, not raised."""
    if isinstance(v, str):
        v = CooptVariant(v)
    model = build_coopt(s, v, M, equiv, **build_kw)
    sol = solve_lp(model.problem, feas_tol=feas_tol, opt_tol=opt_tol)
    if not sol.optimal:
        return CooptResult(v.tag, M, sol.status, lp=sol, limits=dict(model.caps), h=model.h,
                           alpha=model.alpha, message=f"LP {sol.status}")
    return decode(s, model, sol)


# ---------------------------------------------------------------------------

SWEEP_HEADER = ["variant", "M_gws", "total_cost", "total_R_mw", "total_r_mw", "total_b_mw",
                "n_binding_pfr_limits"]
GEN_HEADER = ["variant", "M_gws", "gen_id", "R_mw", "r_mw", "limit_mw", "binding"]


@dataclass
class SweepTable:
    results: list[CooptResult]

    def cell(self, variant: str, M: float) -> CooptResult:
        for res in self.results:
            if res.variant == variant and math.isclose(res.M, M):
                return res
        raise KeyError((variant, M))

    def for_variant(self, variant: str) -> list[CooptResult]:
        return sorted((r for r in self.results if r.variant == variant), key=lambda r: r.M)

    def rows(self) -> list[list]:
        out = []
        for res in self.results:
            if res.ok:
                a = res.allocation
                out.append([res.variant, res.M / 1e3, res.total_cost, float(a.R.sum()),
                            float(a.r.sum()) if res.variant != "A" else "",
                            float(a.b.sum()), len(res.binding_pfr_limits())])
            else:
                # failed cells keep their row with empty values; callers report the reason
                out.append([res.variant, res.M / 1e3, "", "", "", "", ""])
        return out

    def generator_rows(self, s: Scenario) -> list[list]:
        out = []
        for res in self.results:
            if not res.ok:
                continue
            bind = set(res.binding_pfr_limits())
            for i, g in enumerate(s.generators):
                if g.r_bar <= 0:
                    continue
                lim = res.limits.get(i)
                out.append([res.variant, res.M / 1e3, g.id, float(res.allocation.R[i]),
                            float(res.allocation.r[i]) if res.variant != "A" else "",
                            "" if lim is None else float(lim), i in bind])
        return out

    def failures(self) -> list[CooptResult]:
        return [r for r in self.results if not r.ok]

    def to_csv(self, path) -> None:
        _write_csv(path, SWEEP_HEADER, self.rows())

    def generators_to_csv(self, path, s: Scenario) -> None:
        _write_csv(path, GEN_HEADER, self.generator_rows(s))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def sweep_inertia(s: Scenario, variants: Iterable[str], M_list: Sequence[float],
                  equiv: Optional[EquivalencyTable] = None, **solve_kw) -> SweepTable:
    """Solve every (variant, M) cell; failures are recorded and the sweep continues."""
    results = []
    for v in variants:
        for M in M_list:
            try:
                results.append(solve_coopt(s, v, M, equiv, **solve_kw))
            except (DomainError, ArithmeticError, RuntimeError) as exc:
                results.append(CooptResult(v if isinstance(v, str) else v.tag, M, "error",
                                           message=str(exc)))
    return SweepTable(results)
