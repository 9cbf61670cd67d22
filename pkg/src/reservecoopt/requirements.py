"""Closed-form reserve requirements and PFR reserve limits.

The central object is the limit function ``h(M, b_tilde)``: the time (s) a
generator has to ramp before frequency reaches ``omega_min``, given inertia
``M`` and total FFR ``b_tilde``. Multiplied by a ramp rate it caps the PFR
reserve that is *available* before the nadir.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import Allocation, GeneratorSpec, SystemParams


class DomainError(ValueError):
    """Input outside the region where a formula is defined."""


class AssumptionError(DomainError):
    """Inertia below the floor that keeps FFR deployment after PFR ramp start."""

    def __init__(self, M: float, floor: float):
        self.M = M
        self.floor = floor
        super().__init__(
            f"inertia M={M:.6g} MW*s is below the minimum {floor:.6g} MW*s "
            f"(epsilon*L*omega0/(2*delta2)) required for the rate-based limit")


# ---------------------------------------------------------------------------
# droop and offered capacity

def droop_constant(g: GeneratorSpec, p: SystemParams) -> float:
    """Droop constant in MW/Hz: full capacity at ``nu*omega0`` beyond the dead-band."""
    denom = g.nu * p.omega0 - p.delta1
    if not denom > 0:
        raise DomainError(f"nu*omega0 ({g.nu * p.omega0:.6g}) must exceed the dead-band "
                          f"({p.delta1:.6g} Hz)")
    return g.g_max / denom


def offered_pfr_cap(g: GeneratorSpec, p: SystemParams, mode: str = "exact") -> float:
    """Largest PFR capacity a generator may offer without droop overshooting omega_min.

    ``approx`` drops the dead-band, which is what ERCOT uses (0.2*g_max at 5% droop).
    """
    if mode == "exact":
        return droop_constant(g, p) * (p.omega0 - p.omega_min - p.delta1)
    if mode == "approx":
        droop_constant(g, p)  # same domain check
        return g.g_max * (p.omega0 - p.omega_min) / (g.nu * p.omega0)
    raise ValueError(f"mode must be 'exact' or 'approx', got {mode!r}")


# ---------------------------------------------------------------------------
# rate-based limit

def min_inertia_for_assumption(p: SystemParams) -> float:
    """Inertia floor (MW*s) under which FFR could trigger before governors ramp."""
    return p.epsilon * p.contingency_L * p.omega0 / (2.0 * p.delta2)


def delay_drop(M: float, p: SystemParams) -> float:
    """Frequency drop (Hz) accumulated during the governor delay."""
    return p.omega0 / (2.0 * M) * p.epsilon * p.contingency_L


def limit_function_h(M: float, b_tilde: float, p: SystemParams,
                     cancel_tol: float = 1e-6) -> float:
    """Evaluate h(M, b_tilde) in seconds.

    Raises :class:`DomainError` when ``b_tilde`` is outside ``[0, L)`` and
    :class:`AssumptionError` when ``M`` is below :func:`min_inertia_for_assumption`.
    Near ``b_tilde -> L`` the difference in the denominator cancels; there the
    rationalized form ``4M/omega0 * (x + y)^2 / ((L - b)(L + b)^2)`` is used.
    """
    L = p.contingency_L
    if not (0.0 <= b_tilde < L):
        raise DomainError(f"total FFR b_tilde={b_tilde:.6g} MW must lie in [0, L={L:.6g})")
    floor = min_inertia_for_assumption(p)
    # tolerate rounding when M is computed as the floor itself
    if M < floor * (1.0 - 1e-12):
        raise AssumptionError(M, floor)
    d2, d3 = p.delta2, p.delta3
    a = delay_drop(M, p)
    c1 = d2 + d3 - a
    c2 = d2 - a
    x = b_tilde * math.sqrt(d3)
    y = math.sqrt(c1 * L * L - c2 * b_tilde * b_tilde)
    scale = 4.0 * M / p.omega0
    if abs(x - y) < cancel_tol * L * math.sqrt(d3):
        return scale * (x + y) ** 2 / ((L - b_tilde) * (L + b_tilde) ** 2)
    return scale * c1 * c1 * (L - b_tilde) / (x - y) ** 2


def rate_based_limit(g: GeneratorSpec, M: float, b_tilde: float, p: SystemParams) -> float:
    return g.kappa * limit_function_h(M, b_tilde, p)


def proportional_limit(g: GeneratorSpec, R_i: float, M: float, b_tilde: float,
                       p: SystemParams) -> float:
    """Available-PFR cap when the governor ramp rate scales as ``lam * R_i``."""
    if R_i < 0:
        raise DomainError("nominal reserve R_i must be nonnegative")
    return g.lam * R_i * limit_function_h(M, b_tilde, p)


def approx_equivalency_ratio(lambda_common: float, M: float, b_tilde: float,
                             p: SystemParams) -> float:
    if not lambda_common > 0:
        raise DomainError("lambda must be positive")
    return 1.0 / (lambda_common * limit_function_h(M, b_tilde, p))


# ---------------------------------------------------------------------------
# equivalency-ratio table

_TABLE_I = (
    # inertia GW*s, Rfrr MW, ratio
    (120, 5200, 2.2),
    (136, 4700, 2.0),
    (152, 3750, 1.5),
    (177, 3370, 1.4),
    (202, 3100, 1.3),
    (230, 3040, 1.25),
    (256, 2640, 1.13),
    (278, 2640, 1.08),
    (297, 2240, 1.0),
)


@dataclass(frozen=True)
class EquivalencyTable:
    """Rows of (inertia MW*s, requirement upsilon MW, equivalency ratio alpha)."""
    rows: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("equivalency table is empty")
        ms = [r[0] for r in self.rows]
        if any(a >= b for a, b in zip(ms, ms[1:])):
            raise ValueError("equivalency table inertia must be strictly increasing")
        if any(r[2] < 1 or r[1] <= 0 for r in self.rows):
            raise ValueError("equivalency table needs alpha >= 1 and upsilon > 0")

    @classmethod
    def default(cls) -> "EquivalencyTable":
        return cls(tuple((m * 1e3, float(u), float(a)) for m, u, a in _TABLE_I))

    @classmethod
    def from_csv(cls, path) -> "EquivalencyTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"inertia_gws", "rfrr_mw", "ratio"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            rows = [(float(r["inertia_gws"]) * 1e3, float(r["rfrr_mw"]), float(r["ratio"]))
                    for r in reader]
        return cls(tuple(rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["inertia_gws", "rfrr_mw", "ratio"])
            for m, u, a in self.rows:
                w.writerow([repr(m / 1e3), repr(u), repr(a)])

    @property
    def inertia(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def upsilon(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def alpha(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def equivalency_params(M: float, table: EquivalencyTable | None = None) -> tuple[float, float]:
    """(alpha, upsilon) at inertia M, linearly interpolated and clamped at the table ends."""
    t = table or EquivalencyTable.default()
    alpha = float(np.interp(M, t.inertia, t.alpha))
    upsilon = float(np.interp(M, t.inertia, t.upsilon))
    return alpha, upsilon


def equivalency_ratio_limit(alpha: float, R_i: float) -> float:
    if alpha < 1:
        raise DomainError("equivalency ratio alpha must be >= 1")
    return R_i / alpha


# ---------------------------------------------------------------------------
# requirement checks; each returns (satisfied, signed slack in MW)

def check_general_requirement(a: Allocation, L: float) -> tuple[bool, float]:
    slack = float(np.sum(a.r) + np.sum(a.b) - L)
    return slack >= 0, slack


def check_equivalency_requirement(R, b, M: float,
                                  table: EquivalencyTable | None = None) -> tuple[bool, float]:
    alpha, upsilon = equivalency_params(M, table)
    slack = float(np.sum(R) + alpha * np.sum(b) - upsilon)
    return slack >= 0, slack


def check_reformulated_requirement(R, b, alpha: float, L: float) -> tuple[bool, float]:
    if alpha < 1:
        raise DomainError("equivalency ratio alpha must be >= 1")
    slack = float(np.sum(R) / alpha + np.sum(b) - L)
    return slack >= 0, slack


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitReport:
    gen_id: str
    limit: float
    binding: bool
    kind: str


def limit_report(generators: Sequence[GeneratorSpec], M: float, b_tilde: float,
                 p: SystemParams, kind: str = "rate-based", R: Iterable[float] | None = None,
                 r: Iterable[float] | None = None, table: EquivalencyTable | None = None,
                 tol: float = 1e-6) -> list[LimitReport]:
    """Per-generator available-PFR limits; ``binding`` compares against ``r`` when given."""
    R = list(R) if R is not None else [g.r_bar for g in generators]
    r_vals = list(r) if r is not None else [None] * len(generators)
    out = []
    for g, Ri, ri in zip(generators, R, r_vals):
        if kind == "rate-based":
            lim = rate_based_limit(g, M, b_tilde, p)
        elif kind == "proportional":
            lim = proportional_limit(g, Ri, M, b_tilde, p)
        elif kind == "equivalency":
            lim = equivalency_ratio_limit(equivalency_params(M, table)[0], Ri)
        else:
            raise ValueError(f"unknown limit kind {kind!r}")
        binding = ri is not None and ri >= lim - tol
        out.append(LimitReport(g.id, lim, bool(binding), kind))
    return out
