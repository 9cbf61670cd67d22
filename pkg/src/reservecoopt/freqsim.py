"""Post-outage frequency transient under step FFR and ramp-limited governors.

With no damping, the net imbalance is piecewise affine in time (constant
before the governors start, a sum of constant ramps afterwards, plus a step
when FFR trips), so frequency is piecewise quadratic. Each segment is
integrated in closed form and every event time is the root of a quadratic.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import Allocation, Scenario
from .requirements import limit_function_h, min_inertia_for_assumption

# event kinds, in tie-break order for coincident timestamps
DEADBAND = "deadband_crossed"
RAMP_START = "ramp_start"
FFR = "ffr_deployed"
SATURATED = "generator_saturated"
BALANCE = "balance_restored"
NADIR = "nadir"
FLOOR = "floor_violated"
_PRIORITY = {DEADBAND: 0, RAMP_START: 1, FFR: 2, SATURATED: 3, BALANCE: 4, FLOOR: 5, NADIR: 6,
             "breakpoint": 7}


class UnboundedDeclineError(RuntimeError):
    """Reserve cannot restore balance and no floor stops the decline."""


class SamplerError(RuntimeError):
    """No allocation satisfies the sampling constraints."""


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str
    gen_id: Optional[str] = None


@dataclass(frozen=True)
class Segment:
    """Frequency on [t_start, t_end] is ``omega + slope*tau + curv*tau**2`` with tau = t - t_start."""
    t_start: float
    t_end: float
    omega: float
    slope: float
    curv: float
    mech: float  # cumulative governor increase at t_start, MW
    ramp: float  # aggregate ramp rate during the segment, MW/s
    ffr: float  # FFR in service during the segment, MW

    def freq(self, t):
        tau = np.asarray(t, dtype=float) - self.t_start
        return self.omega + self.slope * tau + self.curv * tau * tau

    def coefficients_in_t(self) -> tuple[float, float, float]:
        """Coefficients (c0, c1, c2) of omega(t) = c0 + c1*t + c2*t^2."""
        t0 = self.t_start
        return (self.omega - self.slope * t0 + self.curv * t0 * t0,
                self.slope - 2.0 * self.curv * t0, self.curv)


@dataclass
class SimResult:
    segments: list[Segment]
    events: list[SimEvent]
    nadir: float
    nadir_time: float
    L: float
    base_generation: float = 0.0
    stop_reason: str = BALANCE

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end if self.segments else 0.0

    def event_time(self, kind: str) -> Optional[float]:
        for ev in self.events:
            if ev.kind == kind:
                return ev.time
        return None

    def has_event(self, kind: str) -> bool:
        return any(ev.kind == kind for ev in self.events)

    def final_state(self) -> tuple[float, float]:
        """(cumulative governor increase, FFR) at the end of the run, MW."""
        seg = self.segments[-1]
        return seg.mech + seg.ramp * (seg.t_end - seg.t_start), seg.ffr

    def _segment_at(self, t: float) -> Segment:
        for seg in self.segments:
            if t <= seg.t_end:
                return seg
        return self.segments[-1]

    def sample(self, dt: float) -> list[tuple[float, float, float, float, float]]:
        """Rows (t, omega, total mechanical MW, FFR MW, imbalance MW) on a grid plus event instants."""
        times = set(np.arange(0.0, self.t_end, dt).tolist()) if dt > 0 else set()
        times.update(ev.time for ev in self.events)
        times.add(self.t_end)
        rows = []
        for t in sorted(times):
            seg = self._segment_at(t)
            tau = t - seg.t_start
            mech = seg.mech + seg.ramp * tau
            rows.append((t, float(seg.freq(t)), self.base_generation + mech, seg.ffr,
                         -self.L + mech + seg.ffr))
        return rows

    def to_csv(self, path, dt: float = 0.01) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "omega_hz", "total_mech_mw", "ffr_mw", "imbalance_mw"])
            for row in self.sample(dt):
                w.writerow([repr(float(v)) for v in row])


def _crossing(omega: float, c: float, imb: float, ramp: float, target: float,
              tau_max: float) -> Optional[float]:
    """Earliest tau in [0, tau_max] where the decreasing frequency reaches ``target``."""
    if omega <= target:
        return 0.0
    end = omega + c * (imb * tau_max + 0.5 * ramp * tau_max * tau_max)
    if not end <= target:
        return None
    A = 0.5 * c * ramp
    B = c * imb
    C = omega - target
    if A == 0.0:
        tau = -C / B
    else:
        disc = max(B * B - 4.0 * A * C, 0.0)
        # smaller root, written to avoid cancellation (B < 0)
        tau = 2.0 * C / (-B + math.sqrt(disc))
    return min(max(tau, 0.0), tau_max)


def ramp_rates(s: Scenario, a: Allocation, ramp_model: str = "fixed") -> np.ndarray:
    if ramp_model in ("fixed", "fixed-rate"):
        return s.kappa
    if ramp_model == "proportional":
        return np.array([g.lam for g in s.generators]) * a.R
    raise ValueError(f"ramp_model must be 'fixed' or 'proportional', got {ramp_model!r}")


def simulate_outage(s: Scenario, a: Allocation, ramp_model: str = "fixed",
                    M: Optional[float] = None, floor_hz: Optional[float] = 57.0,
                    horizon: Optional[float] = None,
                    extra_breakpoints: Iterable[float] = (),
                    balance_tol: float = 1e-12) -> SimResult:
    """Simulate the loss of ``L`` MW at t = 0 with allocation ``a``.

    Governors hold output until frequency leaves the dead-band, wait
    ``epsilon``, then ramp at a constant rate until each has delivered its
    available reserve ``r_i``. FFR ``sum(b)`` trips as a step at the first
    crossing of ``omega2``. The run ends when balance is restored (the nadir),
    when frequency hits ``floor_hz``, or at ``horizon``.
    """
    p = s.params
    M = p.inertia_M if M is None else M
    L = p.contingency_L
    c = p.omega0 / (2.0 * M)
    ids = [g.id for g in s.generators]
    rates = ramp_rates(s, a, ramp_model)
    # LP round-off leaves dust-sized reserves; they would only add empty events
    r = np.where(a.r > 1e-9, a.r, 0.0)
    b_total = float(np.sum(a.b))

    deliverable = float(np.sum(r[rates > 0])) + b_total
    t_dead = 2.0 * M * p.delta1 / (p.omega0 * L)
    t_ramp = t_dead + p.epsilon
    sat_times = {i: float(t_ramp + r[i] / rates[i]) for i in range(len(r)) if r[i] > 0 and rates[i] > 0}
    breakpoints = sorted(t for t in extra_breakpoints if t > 0)

    t, omega, mech, ffr = 0.0, p.omega0, 0.0, 0.0
    ramping: set[int] = set()
    dead_done = ramp_done = ffr_done = False
    segments: list[Segment] = []
    events: list[SimEvent] = []
    stop = None

    while stop is None:
        imb = -L + mech + ffr
        if ramp_done and imb >= -balance_tol * L:
            # reached when the last saturation coincides with balance
            mech = L - ffr
            events.append(SimEvent(t, BALANCE))
            stop = BALANCE
            break
        K = float(sum(rates[i] for i in ramping))
        # scheduled events: (time, kind, payload)
        cands: list[tuple[float, str, Optional[int]]] = []
        if not dead_done:
            cands.append((t_dead, DEADBAND, None))
        elif not ramp_done:
            cands.append((t_ramp, RAMP_START, None))
        for i in ramping:
            cands.append((sat_times[i], SATURATED, i))
        if K > 0:
            cands.append((t + (-imb) / K, BALANCE, None))
        for bp in breakpoints:
            if bp > t:
                cands.append((bp, "breakpoint", None))
                break
        if horizon is not None:
            cands.append((max(horizon, t), "horizon", None))
        t_sched = min((ct for ct, _, _ in cands), default=math.inf)
        tau_max = t_sched - t
        # threshold crossings within the window
        if not math.isfinite(tau_max):
            # nothing scheduled: the decline is linear or quadratic with no end
            tau_probe = 1e6
        else:
            tau_probe = tau_max
        if not ffr_done and b_total > 0:
            tau = _crossing(omega, c, imb, K, p.omega2, tau_probe)
            if tau is not None:
                cands.append((t + tau, FFR, None))
        if floor_hz is not None:
            tau = _crossing(omega, c, imb, K, floor_hz, tau_probe)
            if tau is not None:
                cands.append((t + tau, FLOOR, None))
        if not cands:
            raise UnboundedDeclineError(
                f"reserve {deliverable:.6g} MW cannot cover L={L:.6g} MW and no floor is set")
        t_next, kind, payload = min(cands, key=lambda e: (e[0], _PRIORITY.get(e[1], 9)))
        if not math.isfinite(t_next):
            raise UnboundedDeclineError(
                f"reserve {deliverable:.6g} MW cannot cover L={L:.6g} MW and no floor is set")

        tau = t_next - t
        if tau > 0:
            seg = Segment(t, t_next, omega, c * imb, 0.5 * c * K, mech, K, ffr)
            segments.append(seg)
            omega = omega + c * (imb * tau + 0.5 * K * tau * tau)
            mech = mech + K * tau
            t = t_next

        if kind == DEADBAND:
            dead_done = True
            omega = p.omega0 - p.delta1 if tau > 0 else omega
            events.append(SimEvent(t, DEADBAND))
        elif kind == RAMP_START:
            ramp_done = True
            ramping = set(sat_times)
            events.append(SimEvent(t, RAMP_START))
        elif kind == SATURATED:
            ramping.discard(payload)
            events.append(SimEvent(t, SATURATED, ids[payload]))
        elif kind == FFR:
            ffr_done = True
            omega = p.omega2
            ffr = b_total
            events.append(SimEvent(t, FFR))
            if -L + mech + ffr >= 0:
                events.append(SimEvent(t, BALANCE))
                stop = BALANCE
        elif kind == BALANCE:
            mech = L - ffr  # remove rounding drift
            events.append(SimEvent(t, BALANCE))
            stop = BALANCE
        elif kind == FLOOR:
            omega = floor_hz
            events.append(SimEvent(t, FLOOR))
            stop = FLOOR
        elif kind == "horizon":
            if deliverable < L and (floor_hz is None or omega > floor_hz):
                raise UnboundedDeclineError(
                    f"reserve {deliverable:.6g} MW cannot cover L={L:.6g} MW; "
                    f"floor not reached within horizon {horizon:.6g} s")
            stop = "horizon"
        # "breakpoint" only splits the segment

    if not segments:
        segments.append(Segment(t, t, omega, 0.0, 0.0, mech, 0.0, ffr))
    nadir, nadir_time = _min_over_segments(segments)
    if stop == FLOOR:
        nadir, nadir_time = floor_hz, t
    if stop in (BALANCE, FLOOR):
        events.append(SimEvent(nadir_time, NADIR))
    base = float(np.sum(a.G))
    return SimResult(segments, events, float(nadir), float(nadir_time), L, base, stop)


def _min_over_segments(segments: Sequence[Segment]) -> tuple[float, float]:
    best, best_t = math.inf, 0.0
    for seg in segments:
        cands = [seg.t_start, seg.t_end]
        if seg.curv > 0:
            tv = seg.t_start - seg.slope / (2.0 * seg.curv)
            if seg.t_start < tv < seg.t_end:
                cands.append(tv)
        for tc in cands:
            v = float(seg.freq(tc))
            if v < best:
                best, best_t = v, tc
    return best, best_t


def nadir_of(result: SimResult) -> tuple[float, float]:
    """Minimum frequency of the piecewise-quadratic trajectory and when it occurs."""
    if result.stop_reason == FLOOR:
        return result.nadir, result.nadir_time
    return _min_over_segments(result.segments)


# ---------------------------------------------------------------------------
# empirical check of the rate-based sufficient condition

@dataclass
class VerifyReport:
    M: float
    n_samples: int
    min_nadir: Optional[float] = None
    counterexamples: list[tuple[Allocation, float]] = field(default_factory=list)
    nadirs: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples


def _caps(s: Scenario, h: float) -> np.ndarray:
    g = s.generators
    headroom = np.array([x.g_max - x.g_min for x in g])
    r_bar = np.array([x.r_bar for x in g])
    return np.minimum(np.minimum(s.kappa * h, r_bar), headroom)


def sample_secure_allocation(s: Scenario, M: float, rng: np.random.Generator,
                             max_tries: int = 1000) -> Allocation:
    """Draw an allocation with sum(r) + sum(b) >= L and r_i <= kappa_i * h(M, sum(b)).

    Roughly half the draws sit exactly on sum(r) + sum(b) = L, the tight case.
    """
    p = s.params
    L = p.contingency_L
    b_bar = s.b_bar
    g_min = np.array([g.g_min for g in s.generators])
    for _ in range(max_tries):
        # half the draws use the full FFR offer, the operating point of the co-optimization
        if rng.uniform() < 0.5:
            b = b_bar.copy()
        else:
            b = b_bar * rng.uniform(0.0, 1.0, size=b_bar.shape) ** 0.5
        bt = float(np.sum(b))
        if bt >= L:
            continue
        cap = _caps(s, limit_function_h(M, bt, p))
        need = L - bt
        if cap.sum() < need:
            continue
        r = cap * rng.uniform(0.0, 1.0, size=cap.shape) ** 0.25
        if r.sum() < need:
            theta = (need - r.sum()) / (cap.sum() - r.sum())
            r = r + theta * (cap - r)
        if rng.uniform() < 0.5 and r.sum() > need:
            r = r * (need / r.sum())
        r = np.minimum(r, cap)
        return Allocation(G=g_min.copy(), R=r.copy(), r=r, b=b)
    raise SamplerError("no allocation found satisfying the general requirement "
                       "and the rate-based limits")


def verify_rate_limit_security(s: Scenario, seed: int = 0, N: int = 500, M: Optional[float] = None,
                    tol: float = 1e-6) -> VerifyReport:
    """Simulate N random allocations that satisfy the rate-based limit and report any
    whose nadir drops below ``omega_min - tol``."""
    p = s.params
    M = p.inertia_M if M is None else M
    floor = min_inertia_for_assumption(p)
    if M < floor * (1.0 - 1e-12):
        from .requirements import AssumptionError
        raise AssumptionError(M, floor)
    report = VerifyReport(M=M, n_samples=N)
    if N <= 0:
        return report
    L = p.contingency_L
    bt_max = float(np.sum(s.b_bar))
    if bt_max < L and _caps(s, limit_function_h(M, bt_max, p)).sum() + bt_max < L:
        raise SamplerError(f"constraint set empty at M={M:.6g}: even with all FFR the "
                           f"rate-based limits cannot cover L={L:.6g} MW")
    children = np.random.SeedSequence(seed).spawn(N)
    for child in children:
        rng = np.random.default_rng(child)
        alloc = sample_secure_allocation(s, M, rng)
        res = simulate_outage(s, alloc, "fixed", M=M)
        report.nadirs.append(res.nadir)
        if res.nadir < p.omega_min - tol:
            report.counterexamples.append((alloc, res.nadir))
    report.min_nadir = min(report.nadirs)
    return report


@dataclass
class Witness:
    M: float
    allocation: Allocation
    nadir: float


def violation_witness(s: Scenario, M_grid: Sequence[float], factor: float = 3.0) -> Optional[Witness]:
    """Search for an allocation that breaks the rate-based limit by ``factor`` and the floor.

    FFR is left at zero and the general requirement holds with equality: each
    participating unit carries ``factor * kappa_i * h(M, 0)``, the last one the
    remainder. Returns the first allocation whose nadir falls below ``omega_min``.
    """
    p = s.params
    L = p.contingency_L
    g_min = np.array([g.g_min for g in s.generators])
    for M in M_grid:
        h = limit_function_h(M, 0.0, p)
        target = factor * s.kappa * h
        r = np.zeros(len(target))
        left = L
        for i in np.argsort(-target, kind="stable"):
            if left <= 0 or target[i] <= 0:
                break
            r[i] = min(target[i], left)
            left -= r[i]
        if left > 1e-9:
            continue
        alloc = Allocation(G=g_min.copy(), R=r.copy(), r=r, b=np.zeros(len(s.ffr)))
        res = simulate_outage(s, alloc, "fixed", M=M)
        if res.nadir < p.omega_min:
            return Witness(M, alloc, res.nadir)
    return None
