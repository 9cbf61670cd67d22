"""Command-line front end: limits, simulation, co-optimization sweeps and verification.

Exit codes: 0 success, 1 validation or domain error, 2 solver or simulation
failure, 3 a frequency nadir below omega_min.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from typing import Optional, Sequence

import numpy as np

from .coopt import VARIANTS, SweepTable, solve_coopt, sweep_inertia
from .freqsim import SamplerError, UnboundedDeclineError, simulate_outage, verify_rate_limit_security
from .lp import IterationLimitError
from .model import ScenarioError, validate_allocation, validate_scenario
from .requirements import (DomainError, EquivalencyTable, limit_function_h, limit_report,
                           min_inertia_for_assumption)
from .scenario_io import (CaseFormatError, generate_synthetic_case, load_allocation, load_case,
                          save_scenario)

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3

_SWEEP_B_GWS = (123.75, 150.0, 200.0, 300.0)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH",
                        help="JSON case file (default: the seeded synthetic case)")
    common.add_argument("--equivalency-table", metavar="PATH",
                        help="CSV with columns inertia_gws,rfrr_mw,ratio")
    common.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--inertia-gws", type=_float_list, metavar="LIST",
                        help="comma-separated inertia levels in GW*s")
    grp = common.add_argument_group("parameter overrides")
    grp.add_argument("--contingency-mw", type=float, help="largest credible loss L in MW")
    grp.add_argument("--epsilon", type=float, help="governor delay in s")
    grp.add_argument("--omega0", type=float)
    grp.add_argument("--omega1", type=float, help="governor dead-band edge in Hz")
    grp.add_argument("--omega2", type=float, help="FFR trigger in Hz")
    grp.add_argument("--omega-min", type=float, help="load-shedding threshold in Hz")

    ap = argparse.ArgumentParser(prog="reservecoopt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("limits", parents=[common], help="h(M, b) and per-generator PFR limits")
    p.add_argument("--b-tilde", type=float, metavar="MW", help="total FFR (default: all offers)")
    p.add_argument("--sweep-b", action="store_true", help="emit h over b in [0, 1200] MW as CSV")
    p.add_argument("--inverse", action="store_true", help="emit 1/h over the same grid")
    p.add_argument("--b-step", type=float, default=25.0, metavar="MW")

    p = sub.add_parser("simulate", parents=[common], help="simulate the outage transient")
    p.add_argument("--allocation", metavar="PATH",
                   help="allocation JSON with G, R, r, b (default: a variant-B solve)")
    p.add_argument("--ramp-model", choices=("fixed", "proportional"), default="fixed")
    p.add_argument("--dt", type=float, default=0.01, help="trajectory sampling step in s")

    p = sub.add_parser("cooptimize", parents=[common], help="solve one co-optimization")
    p.add_argument("--variant", choices=VARIANTS, default="B")
    p.add_argument("--gen-out", metavar="PATH", help="per-generator CSV")

    p = sub.add_parser("sweep", parents=[common], help="solve variants across inertia levels")
    p.add_argument("--variant", choices=VARIANTS, action="append",
                   help="repeatable (default: A, B and C)")
    p.add_argument("--gen-out", metavar="PATH", help="per-generator CSV")

    p = sub.add_parser("verify", parents=[common],
                       help="sample secure allocations and check every nadir")
    p.add_argument("--samples", type=int, default=500, metavar="N")

    p = sub.add_parser("gen-case", parents=[common], help="write a synthetic case file")
    p.add_argument("--n-gens", type=int, default=150)
    p.add_argument("--n-buses", type=int, default=30)
    p.add_argument("--n-ffr", type=int, default=4)
    return ap


# ---------------------------------------------------------------------------

def _overrides(args) -> dict:
    names = {"contingency_mw": "contingency_L", "epsilon": "epsilon", "omega0": "omega0",
             "omega1": "omega1", "omega2": "omega2", "omega_min": "omega_min"}
    return {dst: getattr(args, src) for src, dst in names.items()
            if getattr(args, src) is not None}


def _load(args):
    if args.scenario:
        s, equiv = load_case(args.scenario)
    else:
        s, equiv = generate_synthetic_case(seed=args.seed), None
    changes = _overrides(args)
    if changes:
        s = s.with_params(**changes)
        problems = validate_scenario(s)
        if problems:
            raise ScenarioError(problems)
    if args.equivalency_table:
        equiv = EquivalencyTable.from_csv(args.equivalency_table)
    return s, equiv or EquivalencyTable.default()


def _inertia(args, s, fallback: Optional[Sequence[float]] = None) -> list[float]:
    if args.inertia_gws:
        return [m * 1e3 for m in args.inertia_gws]
    if fallback is not None:
        return list(fallback)
    return [s.params.inertia_M]


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# ---------------------------------------------------------------------------

def cmd_limits(args, out) -> int:
    s, equiv = _load(args)
    p = s.params
    if args.sweep_b or args.inverse:
        Ms = _inertia(args, s, [m * 1e3 for m in _SWEEP_B_GWS])
        grid = np.arange(0.0, 1200.0 + 1e-9, args.b_step)
        grid = grid[grid < p.contingency_L]
        col = "inv_h_per_s" if args.inverse else "h_s"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["M_gws", "b_tilde_mw", col])
        for M in Ms:
            for b in grid:
                h = limit_function_h(M, float(b), p)
                w.writerow([repr(M / 1e3), repr(float(b)), repr(1.0 / h if args.inverse else h)])
        _emit(args, buf.getvalue())
        return EXIT_OK

    b_tilde = float(np.sum(s.b_bar)) if args.b_tilde is None else args.b_tilde
    pfr = [g for g in s.generators if g.r_bar > 0] or list(s.generators)
    buf = io.StringIO()
    for M in _inertia(args, s):
        h = limit_function_h(M, b_tilde, p)
        buf.write(f"M = {_fmt(M / 1e3)} GW*s  b_tilde = {_fmt(b_tilde)} MW  "
                  f"h = {h:.6f} s  (inertia floor {_fmt(min_inertia_for_assumption(p))} MW*s)\n")
        rate = limit_report(pfr, M, b_tilde, p, "rate-based")
        prop = limit_report(pfr, M, b_tilde, p, "proportional")
        eq = limit_report(pfr, M, b_tilde, p, "equivalency", table=equiv)
        buf.write(f"{'gen_id':<10}{'R_bar_mw':>12}{'rate_mw':>12}{'prop_mw':>12}{'equiv_mw':>12}\n")
        for g, a, b, c in zip(pfr, rate, prop, eq):
            buf.write(f"{g.id:<10}{g.r_bar:>12.3f}{a.limit:>12.3f}{b.limit:>12.3f}"
                      f"{c.limit:>12.3f}\n")
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    s, equiv = _load(args)
    M = _inertia(args, s)[0]
    p = s.params
    if args.allocation:
        alloc = load_allocation(args.allocation)
    else:
        res = solve_coopt(s, "B", M, equiv)
        if not res.ok:
            raise CliError(f"variant B at M={_fmt(M / 1e3)} GW*s: {res.status}", EXIT_SOLVER)
        alloc = res.allocation
    problems = validate_allocation(s, alloc)
    if problems:
        raise ScenarioError(problems)
    cover = float(np.sum(alloc.r) + np.sum(alloc.b))
    if cover < p.contingency_L * (1.0 - 1e-12):
        raise UnboundedDeclineError(
            f"unbounded decline: reserve {cover:.6g} MW cannot cover L={p.contingency_L:.6g} MW, "
            "frequency never recovers")
    result = simulate_outage(s, alloc, args.ramp_model, M=M)
    if args.out:
        result.to_csv(args.out, args.dt)
    ok = result.nadir >= p.omega_min
    print(f"nadir {result.nadir:.6f} Hz at t = {result.nadir_time:.4f} s "
          f"(omega_min {p.omega_min:g} Hz, stop: {result.stop_reason})", file=out)
    for ev in result.events:
        tag = f" {ev.gen_id}" if ev.gen_id is not None else ""
        print(f"  {ev.time:10.4f} s  {ev.kind}{tag}", file=out)
    print("PASS" if ok else "FAIL", file=out)
    return EXIT_OK if ok else EXIT_COUNTEREXAMPLE


def _summary(table: SweepTable, out) -> None:
    for res in table.results:
        head = f"{res.variant}  M = {_fmt(res.M / 1e3):>7} GW*s  "
        if res.ok:
            a = res.allocation
            print(head + f"cost {res.total_cost:14.4f}  R {a.R.sum():9.2f}  "
                  f"b {a.b.sum():8.2f}  binding {len(res.binding_pfr_limits())}", file=out)
        else:
            print(head + f"FAILED ({res.status}) {res.message}", file=out)


def _write_tables(args, s, table: SweepTable) -> None:
    if args.out:
        table.to_csv(args.out)
    if args.gen_out:
        table.generators_to_csv(args.gen_out, s)


def cmd_cooptimize(args, out) -> int:
    s, equiv = _load(args)
    M = _inertia(args, s)[0]
    table = sweep_inertia(s, [args.variant], [M], equiv)
    _write_tables(args, s, table)
    _summary(table, out)
    return EXIT_SOLVER if table.failures() else EXIT_OK


def cmd_sweep(args, out) -> int:
    s, equiv = _load(args)
    Ms = _inertia(args, s, equiv.inertia.tolist())
    variants = args.variant or list(VARIANTS)
    table = sweep_inertia(s, variants, Ms, equiv)
    _write_tables(args, s, table)
    _summary(table, out)
    fails = table.failures()
    if fails:
        print(f"{len(fails)} of {len(table.results)} cells failed", file=sys.stderr)
    return EXIT_SOLVER if len(fails) == len(table.results) else EXIT_OK


def cmd_verify(args, out) -> int:
    s, _ = _load(args)
    if args.samples < 0:
        raise CliError("--samples must be nonnegative", EXIT_INPUT)
    rows = []
    bad = 0
    for M in _inertia(args, s):
        rep = verify_rate_limit_security(s, seed=args.seed, N=args.samples, M=M)
        rows.extend((M, k, n) for k, n in enumerate(rep.nadirs))
        bad += len(rep.counterexamples)
        worst = "n/a" if rep.min_nadir is None else f"{rep.min_nadir:.6f} Hz"
        print(f"M = {_fmt(M / 1e3)} GW*s  samples {rep.n_samples}  min nadir {worst}  "
              f"counterexamples {len(rep.counterexamples)}", file=out)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["M_gws", "sample", "nadir_hz"])
            for M, k, n in rows:
                w.writerow([repr(M / 1e3), k, repr(float(n))])
    return EXIT_COUNTEREXAMPLE if bad else EXIT_OK


def cmd_gen_case(args, out) -> int:
    base = generate_synthetic_case(n_gens=args.n_gens, n_ffr=args.n_ffr, n_buses=args.n_buses,
                                   seed=args.seed)
    changes = _overrides(args)
    if changes:
        base = base.with_params(**changes)
        problems = validate_scenario(base)
        if problems:
            raise ScenarioError(problems)
    equiv = (EquivalencyTable.from_csv(args.equivalency_table) if args.equivalency_table
             else EquivalencyTable.default())
    if args.out:
        save_scenario(base, args.out, equiv)
    else:
        import json
        from .scenario_io import scenario_to_dict
        out.write(json.dumps(scenario_to_dict(base, equiv), indent=1) + "\n")
    return EXIT_OK


_COMMANDS = {"limits": cmd_limits, "simulate": cmd_simulate, "cooptimize": cmd_cooptimize,
             "sweep": cmd_sweep, "verify": cmd_verify, "gen-case": cmd_gen_case}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout
    try:
        return _COMMANDS[args.command](args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ScenarioError, CaseFormatError, DomainError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnboundedDeclineError, SamplerError, IterationLimitError, ArithmeticError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
