"""Domain types shared across the toolkit.

Units are fixed everywhere: MW for power, MW·s for inertia, Hz for frequency,
seconds for time, MW/s for ramp rates and $/MWh for prices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    omega0: float = 60.0
    omega1: float = 59.9833
    omega2: float = 59.85
    omega_min: float = 59.4
    epsilon: float = 0.2
    contingency_L: float = 2750.0
    inertia_M: float = 200_000.0

    @property
    def delta1(self) -> float:
        return self.omega0 - self.omega1

    @property
    def delta2(self) -> float:
        return self.omega1 - self.omega2

    @property
    def delta3(self) -> float:
        return self.omega0 - self.delta1 - self.delta2 - self.omega_min

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace
        return replace(self, **changes)


def ercot_params(**overrides) -> SystemParams:
    """ERCOT thresholds (NPRR 863) with a 0.2 s governor delay and L = 2750 MW."""
    return SystemParams(**overrides)


def derived_deltas(p: SystemParams) -> tuple[float, float, float]:
    """Return (dead-band, FFR trigger margin, remaining margin to omega_min) in Hz."""
    return p.delta1, p.delta2, p.delta3


@dataclass(frozen=True)
class GeneratorSpec:
    """A synchronous generator that may offer PFR reserve.

    ``cost_curve`` holds ``(segment_end_mw, marginal_price)`` pairs. Segments
    start at ``g_min``; the last breakpoint must equal ``g_max``. Output at
    ``g_min`` is priced at zero (no-load cost is not modeled).
    """
    id: str
    bus: int
    g_min: float
    g_max: float
    nu: float = 0.05
    kappa: float = 20.0
    lam: float = 0.2
    r_bar: float = 0.0
    cost_curve: tuple[tuple[float, float], ...] = ()

    def cost(self, g: float) -> float:
        """Piecewise-linear cost in $/h of producing ``g`` MW."""
        total, lo = 0.0, self.g_min
        for hi, price in self.cost_curve:
            if g <= lo:
                break
            total += (min(g, hi) - lo) * price
            lo = hi
        return total


@dataclass(frozen=True)
class FfrSpec:
    id: str
    bus: int
    b_bar: float
    price: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    flow_limit: float


@dataclass(frozen=True)
class Network:
    n_buses: int
    lines: tuple[Line, ...]
    demand: tuple[float, ...]

    @property
    def total_demand(self) -> float:
        return float(sum(self.demand))


@dataclass
class Allocation:
    """Dispatch plus reserve point: generation G, nominal PFR R, available PFR r, FFR b."""
    G: np.ndarray
    R: np.ndarray
    r: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    @classmethod
    def reserves_only(cls, r, b, R=None, G=None) -> "Allocation":
        r = np.asarray(r, dtype=float)
        return cls(G=np.zeros_like(r) if G is None else G,
                   R=r.copy() if R is None else R, r=r, b=b)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("G", "R", "r", "b")}

    @classmethod
    def from_dict(cls, d: dict) -> "Allocation":
        return cls(G=d["G"], R=d["R"], r=d["r"], b=d["b"])


@dataclass(frozen=True)
class Scenario:
    params: SystemParams
    generators: tuple[GeneratorSpec, ...]
    ffr: tuple[FfrSpec, ...] = ()
    network: Optional[Network] = None

    @property
    def kappa(self) -> np.ndarray:
        return np.array([g.kappa for g in self.generators], dtype=float)

    @property
    def b_bar(self) -> np.ndarray:
        return np.array([f.b_bar for f in self.ffr], dtype=float)

    def with_params(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, params=self.params.replace(**changes))


class ScenarioError(ValueError):
    """Raised when a scenario fails validation; carries every violation."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


def _finite(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def _check(out: list, ok, message: str) -> None:
    try:
        passed = bool(ok())
    except Exception:
        passed = False
    if not passed:
        out.append(message)


def _validate_params(p: SystemParams, out: list) -> None:
    for name in ("omega0", "omega1", "omega2", "omega_min", "epsilon",
                 "contingency_L", "inertia_M"):
        _check(out, lambda: _finite(getattr(p, name)), f"params.{name} not finite")
    _check(out, lambda: p.omega_min < p.omega2, "omega_min < omega2 violated")
    _check(out, lambda: p.omega2 < p.omega1, "omega2 < omega1 violated")
    _check(out, lambda: p.omega1 < p.omega0, "omega1 < omega0 violated")
    _check(out, lambda: p.epsilon >= 0, "epsilon >= 0 violated")
    _check(out, lambda: p.contingency_L > 0, "contingency_L > 0 violated")
    _check(out, lambda: p.inertia_M > 0, "inertia_M > 0 violated")


def _validate_generator(k: int, g: GeneratorSpec, n_buses: Optional[int], out: list) -> None:
    tag = f"generators[{k}]"
    _check(out, lambda: 0 <= g.g_min <= g.g_max, f"{tag}: 0 <= g_min <= g_max violated")
    _check(out, lambda: g.nu > 0, f"{tag}: nu > 0 violated")
    _check(out, lambda: g.kappa >= 0, f"{tag}: kappa >= 0 violated")
    _check(out, lambda: g.lam >= 0, f"{tag}: lam >= 0 violated")
    _check(out, lambda: g.r_bar >= 0, f"{tag}: r_bar >= 0 violated")
    _check(out, lambda: int(g.bus) == g.bus and g.bus >= 0, f"{tag}: bus index invalid")
    if n_buses is not None:
        _check(out, lambda: g.bus < n_buses, f"{tag}: bus {g.bus} out of range")
    curve = g.cost_curve
    _check(out, lambda: len(curve) >= 1, f"{tag}: cost_curve empty")
    try:
        ends = [float(c[0]) for c in curve]
        prices = [float(c[1]) for c in curve]
    except Exception:
        out.append(f"{tag}: cost_curve malformed")
        return
    if not ends:
        return
    _check(out, lambda: all(map(_finite, ends + prices)), f"{tag}: cost_curve not finite")
    _check(out, lambda: ends[0] > g.g_min or (len(ends) == 1 and ends[0] >= g.g_min),
           f"{tag}: cost_curve first breakpoint must exceed g_min")
    _check(out, lambda: all(a < b for a, b in zip(ends, ends[1:])),
           f"{tag}: cost_curve breakpoints not increasing")
    _check(out, lambda: abs(ends[-1] - g.g_max) <= 1e-9 * max(1.0, abs(g.g_max)),
           f"{tag}: cost_curve last breakpoint must equal g_max")
    _check(out, lambda: all(a <= b for a, b in zip(prices, prices[1:])),
           f"{tag}: cost_curve not convex")


def validate_scenario(s: Scenario) -> list[str]:
    """Return every violated invariant of ``s`` as a message; empty when valid."""
    out: list[str] = []
    _validate_params(s.params, out)
    net = s.network
    n_buses = None
    if net is not None:
        _check(out, lambda: int(net.n_buses) >= 1, "network.n_buses >= 1 violated")
        try:
            n_buses = int(net.n_buses)
        except Exception:
            n_buses = None
        _check(out, lambda: len(net.demand) == net.n_buses, "network.demand length != n_buses")
        for k, ln in enumerate(net.lines):
            _check(out, lambda: ln.susceptance > 0, f"network.lines[{k}]: susceptance > 0 violated")
            _check(out, lambda: ln.flow_limit > 0, f"network.lines[{k}]: flow_limit > 0 violated")
            _check(out, lambda: 0 <= ln.from_bus < net.n_buses and 0 <= ln.to_bus < net.n_buses
                   and ln.from_bus != ln.to_bus, f"network.lines[{k}]: bus index invalid")
        _check(out, lambda: _connected(net), "network not connected")
    _check(out, lambda: len(s.generators) >= 1, "at least one generator required")
    for k, g in enumerate(s.generators):
        _validate_generator(k, g, n_buses, out)
    for k, f in enumerate(s.ffr):
        _check(out, lambda: f.b_bar >= 0, f"ffr[{k}]: b_bar >= 0 violated")
        _check(out, lambda: int(f.bus) == f.bus and f.bus >= 0, f"ffr[{k}]: bus index invalid")
        if n_buses is not None:
            _check(out, lambda: f.bus < n_buses, f"ffr[{k}]: bus {f.bus} out of range")
    return out


def validate_allocation(s: Scenario, a: Allocation, tol: float = 1e-9) -> list[str]:
    out: list[str] = []
    n, beta = len(s.generators), len(s.ffr)
    if a.G.shape != (n,) or a.R.shape != (n,) or a.r.shape != (n,) or a.b.shape != (beta,):
        return ["allocation shape does not match scenario"]
    for name in ("G", "R", "r", "b"):
        if np.any(getattr(a, name) < -tol):
            out.append(f"allocation.{name} negative")
    g_max = np.array([g.g_max for g in s.generators])
    r_bar = np.array([g.r_bar for g in s.generators])
    if np.any(a.r > a.R + tol):
        out.append("allocation: r <= R violated")
    if np.any(a.R > r_bar + tol):
        out.append("allocation: R <= r_bar violated")
    if np.any(a.G + a.R > g_max + tol):
        out.append("allocation: G + R <= g_max violated")
    if np.any(a.b > s.b_bar + tol):
        out.append("allocation: b <= b_bar violated")
    return out


def _connected(net: Network) -> bool:
    n = int(net.n_buses)
    adj: list[list[int]] = [[] for _ in range(n)]
    for ln in net.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    seen, stack = {0}, [0]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n
