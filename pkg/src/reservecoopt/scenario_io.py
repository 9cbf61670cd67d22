"""JSON case files and a synthetic Texas-like test case."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .model import (Allocation, FfrSpec, GeneratorSpec, Line, Network, Scenario,
                    ScenarioError, SystemParams, validate_scenario)
from .requirements import EquivalencyTable


class CaseFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# serialization

def scenario_to_dict(s: Scenario, equiv: Optional[EquivalencyTable] = None) -> dict:
    doc = {
        "params": asdict(s.params),
        "generators": [dict(asdict(g), cost_curve=[list(c) for c in g.cost_curve])
                       for g in s.generators],
        "ffr": [asdict(f) for f in s.ffr],
        "network": None,
    }
    if s.network is not None:
        net = s.network
        doc["network"] = {"n_buses": net.n_buses,
                          "lines": [asdict(ln) for ln in net.lines],
                          "demand": list(net.demand)}
    if equiv is not None:
        doc["equivalency_table"] = [
            {"inertia_gws": m / 1e3, "rfrr_mw": u, "ratio": a} for m, u, a in equiv.rows]
    return doc


def _take(d: dict, cls, where: str, required: tuple[str, ...]):
    if not isinstance(d, dict):
        raise CaseFormatError(f"{where}: expected an object")
    missing = [k for k in required if k not in d]
    if missing:
        raise CaseFormatError(f"missing key {where}.{missing[0]}"
                              + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise CaseFormatError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**d)


def scenario_from_dict(doc: dict) -> tuple[Scenario, Optional[EquivalencyTable]]:
    if not isinstance(doc, dict):
        raise CaseFormatError("case file must contain a JSON object")
    for key in ("params", "generators"):
        if key not in doc:
            raise CaseFormatError(f"missing key {key}")
    params = _take(doc["params"], SystemParams, "params",
                   tuple(f.name for f in fields(SystemParams)))
    gens = []
    for k, g in enumerate(doc["generators"]):
        g = dict(g)
        if "cost_curve" in g:
            g["cost_curve"] = tuple(tuple(float(v) for v in c) for c in g["cost_curve"])
        gens.append(_take(g, GeneratorSpec, f"generators[{k}]",
                          ("id", "bus", "g_min", "g_max", "cost_curve")))
    ffr = tuple(_take(dict(f), FfrSpec, f"ffr[{k}]", ("id", "bus", "b_bar"))
                for k, f in enumerate(doc.get("ffr") or []))
    network = None
    net = doc.get("network")
    if net is not None:
        for key in ("n_buses", "lines", "demand"):
            if key not in net:
                raise CaseFormatError(f"missing key network.{key}")
        lines = tuple(_take(dict(ln), Line, f"network.lines[{k}]",
                            ("from_bus", "to_bus", "susceptance", "flow_limit"))
                      for k, ln in enumerate(net["lines"]))
        network = Network(net["n_buses"], lines, tuple(float(x) for x in net["demand"]))
    equiv = None
    if doc.get("equivalency_table"):
        equiv = EquivalencyTable(tuple(
            (float(r["inertia_gws"]) * 1e3, float(r["rfrr_mw"]), float(r["ratio"]))
            for r in doc["equivalency_table"]))
    return Scenario(params, tuple(gens), ffr, network), equiv


def load_case(path) -> tuple[Scenario, Optional[EquivalencyTable]]:
    """Load and validate a case file, reporting every violation at once."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: JSON parse error at line {exc.lineno}, "
                              f"column {exc.colno}: {exc.msg}") from exc
    try:
        s, equiv = scenario_from_dict(doc)
    except TypeError as exc:
        raise CaseFormatError(f"{path}: {exc}") from exc
    problems = validate_scenario(s)
    if problems:
        raise ScenarioError(problems)
    return s, equiv


def load_scenario(path) -> Scenario:
    return load_case(path)[0]


def save_scenario(s: Scenario, path, equiv: Optional[EquivalencyTable] = None) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s, equiv), indent=1) + "\n")


def load_allocation(path) -> Allocation:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"{path}: JSON parse error at line {exc.lineno}, "
                              f"column {exc.colno}: {exc.msg}") from exc
    missing = [k for k in ("G", "R", "r", "b") if k not in doc]
    if missing:
        raise CaseFormatError(f"{path}: missing key {missing[0]}")
    return Allocation.from_dict(doc)


def save_allocation(a: Allocation, path) -> None:
    Path(path).write_text(json.dumps(a.to_dict(), indent=1) + "\n")


# ---------------------------------------------------------------------------
# synthetic case

def _random_tree_plus(rng: np.random.Generator, n: int, extra: int) -> list[tuple[int, int]]:
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    tries = 0
    while len(edges) < n - 1 + extra and tries < 50 * (extra + 1):
        a, b = (int(v) for v in rng.choice(n, size=2, replace=False))
        edges.add((min(a, b), max(a, b)))
        tries += 1
    return sorted(edges)


def generate_synthetic_case(n_gens: int = 150, n_ffr: int = 4, n_buses: int = 30,
                            seed: int = 42, n_pfr: int = 50, total_ffr: float = 600.0,
                            L: float = 2500.0, kappa: float = 20.0, lam: float = 0.2,
                            inertia_M: float = 200_000.0, headroom: float = 0.15,
                            params: Optional[SystemParams] = None) -> Scenario:
    """Build a seeded synthetic case shaped like the ERCOT study.

    A third of the fleet is cheap baseload; the rest is gas, and the
    ``n_pfr`` largest gas units carry PFR offers of ``0.2 * g_max``. Demand
    leaves ``headroom`` of spare capacity beyond demand plus ``L``. Line limits
    are set with margin over the flows of a merit-order dispatch.
    """
    if min(n_gens, n_ffr, n_buses) < 1:
        raise ValueError("counts must be at least 1")
    rng = np.random.default_rng(seed)
    base = params or SystemParams()
    p = SystemParams(base.omega0, base.omega1, base.omega2, base.omega_min, base.epsilon,
                     float(L), float(inertia_M))

    cap = np.clip(rng.lognormal(math.log(420.0), 0.6, size=n_gens), 50.0, 1400.0).round(1)
    baseload = rng.uniform(size=n_gens) < 1.0 / 3.0
    gas = np.flatnonzero(~baseload)
    pfr = set(gas[np.argsort(-cap[gas], kind="stable")][:n_pfr].tolist())
    buses = rng.integers(0, n_buses, size=n_gens)

    gens = []
    for i in range(n_gens):
        g_max = float(cap[i])
        g_min = round(g_max * float(rng.uniform(0.2, 0.4)), 1)
        price = float(rng.uniform(6.0, 14.0) if baseload[i] else rng.uniform(18.0, 55.0))
        n_seg = int(rng.integers(2, 4))
        cuts = np.sort(rng.uniform(0.2, 0.9, size=n_seg - 1))
        ends = [round(g_min + (g_max - g_min) * c, 1) for c in cuts] + [g_max]
        curve, pr = [], price
        for e in ends:
            curve.append((float(e), round(pr, 2)))
            pr += float(rng.uniform(0.5, 6.0))
        gens.append(GeneratorSpec(
            id=f"G{i:03d}", bus=int(buses[i]), g_min=g_min, g_max=g_max, nu=0.05,
            kappa=float(kappa), lam=float(lam),
            r_bar=round(0.2 * g_max, 6) if i in pfr else 0.0, cost_curve=tuple(curve)))

    w = rng.dirichlet(np.ones(n_ffr))
    b_caps = np.round(w * total_ffr, 6)
    b_caps[-1] = round(total_ffr - float(np.sum(b_caps[:-1])), 6)
    ffr = tuple(FfrSpec(f"F{j:02d}", int(rng.integers(0, n_buses)), float(b_caps[j]), 0.0)
                for j in range(n_ffr))

    total_cap = float(cap.sum())
    g_min_total = sum(g.g_min for g in gens)
    d_total = max((total_cap - L) / (1.0 + headroom), 1.05 * g_min_total)
    load_w = rng.dirichlet(np.full(n_buses, 2.0))
    demand = np.round(load_w * d_total, 3)

    edges = _random_tree_plus(rng, n_buses, extra=max(1, n_buses // 3))
    susc = rng.uniform(5.0, 20.0, size=len(edges)).round(3)
    lines = [Line(a, b, float(x), 1.0) for (a, b), x in zip(edges, susc)]
    net = Network(n_buses, tuple(lines), tuple(float(d) for d in demand))

    # limits from the flows of a merit-order dispatch, with margin
    order = sorted(range(n_gens), key=lambda i: gens[i].cost_curve[0][1])
    G = np.array([g.g_min for g in gens])
    left = float(demand.sum()) - G.sum()
    for i in order:
        add = min(gens[i].g_max - G[i], left)
        G[i] += add
        left -= add
    from .coopt import ptdf_matrix
    inj = -demand.copy()
    np.add.at(inj, buses, G)
    flows = ptdf_matrix(net, 0) @ inj
    floor = 0.08 * float(demand.sum())
    limits = np.maximum(2.0 * np.abs(flows), floor).round(1)
    net = Network(n_buses, tuple(Line(ln.from_bus, ln.to_bus, ln.susceptance, float(f))
                                 for ln, f in zip(lines, limits)), net.demand)
    s = Scenario(p, tuple(gens), ffr, net)
    problems = validate_scenario(s)
    if problems:  # pragma: no cover - generator bug
        raise ScenarioError(problems)
    return s
