"""Command-line entry point: solve one slot, simulate a horizon, or compare
scenarios, reading a YAML run configuration and writing CSV/structured
reports (and figures) into the output directory.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O
failure while writing outputs.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .equilibrium import Quadrature, SolutionCase, SolverError, _tail_expectation
from .figures import render_figures
from .reports import (
    write_compare_csv,
    write_curves_csv,
    write_slots_csv,
    write_structured,
    write_summary_csv,
    summary_table,
)
from .simulator import ANTICIPATORY, NAIVE, SCENARIOS, _solve_slot, run_horizon

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

SOLVE_COLUMNS = [
    "scenario",
    "slot",
    "case",
    "u_d",
    "pi_d",
    "residual",
    "congestion_probability",
    "u_lower",
    "u_upper",
    "pessimistic_u_d",
    "pessimistic_pi_d",
    "optimistic_u_d",
    "optimistic_pi_d",
]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdgame",
        description="Day-ahead + redispatch market equilibria and simulations "
        "for flexible consumers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve the market threshold for a single slot"),
        ("simulate", "run the full horizon and write reports"),
        ("compare", "side-by-side anticipatory vs naive comparison"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override simulation.seed")
        p.add_argument("--out", help="override output.directory")
        p.add_argument(
            "--format",
            dest="out_format",
            choices=("csv", "structured"),
            help="override output.format",
        )
        p.add_argument(
            "--scenario",
            action="append",
            choices=SCENARIOS,
            help="restrict scenarios (repeatable)",
        )
        p.add_argument(
            "--diagnostics",
            action="store_true",
            help="also write solver gap grids and bisection traces",
        )
        p.add_argument("--workers", type=int, help="parallel slot workers")
        p.add_argument(
            "--figures",
            action=argparse.BooleanOptionalAction,
            default=None,
            help="override output.figures",
        )
        if name == "solve":
            p.add_argument("--slot", type=int, help="slot index (default: simulation.solve_slot)")
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.out_format is not None:
        updates["out_format"] = args.out_format
    if args.scenario:
        updates["scenarios"] = tuple(dict.fromkeys(args.scenario))
    if args.figures is not None:
        updates["figures"] = args.figures
    return replace(config, **updates) if updates else config


def _ensure_out_dir(config: RunConfig) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return config.out_dir


def _print_solution(scenario: str, slot: int, sol, selections) -> None:
    print(f"slot {slot}, scenario {scenario}")
    print(f"  case                    {sol.case.value}")
    print(f"  u_d                     {sol.u_d:.9f} $/kWh")
    print(f"  pi_d                    {sol.pi_d:.9f} $/kWh")
    print(f"  residual                {sol.residual:.3e} $/kWh")
    print(f"  congestion probability  {sol.congestion_probability:.6f}")
    if sol.interval is not None:
        lower, upper = sol.interval
        print(f"  interval                [{lower:.9f}, {upper:.9f}]")
        for rule in ("pessimistic", "optimistic"):
            u_sel, pi_sel = selections[rule]
            print(f"  {rule:<11} selection   u_d {u_sel:.9f}, pi_d {pi_sel:.9f}")


def _write_gap_diagnostics(config, cfg, scenario, out_dir, trace) -> None:
    mf = config.mean_field()
    unc = cfg.uncertainty()
    method = Quadrature(cfg.quadrature_nodes)
    grid = np.linspace(mf.u_min, mf.u_max, 200)
    phi = np.asarray(mf.phi(grid))
    supply_prices = np.asarray(config.supply.price(cfg.d0 + phi))
    if scenario == ANTICIPATORY:
        bids = grid + np.asarray(_tail_expectation(mf, unc, grid, grid, method))
    else:
        bids = grid
    gaps = bids - supply_prices
    path = os.path.join(out_dir, f"solve_{scenario}_gap.csv")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["u", "phi_kwh", "supply_price", "bid_price", "gap"])
        for i in range(len(grid)):
            writer.writerow(
                [repr(float(v)) for v in (grid[i], phi[i], supply_prices[i], bids[i], gaps[i])]
            )
    trace_path = os.path.join(out_dir, f"solve_{scenario}_trace.csv")
    with open(trace_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "lo", "hi", "mid", "gap"])
        for row in trace or []:
            writer.writerow(
                [
                    row["iteration"],
                    repr(float(row["lo"])),
                    repr(float(row["hi"])),
                    repr(float(row["mid"])),
                    repr(float(row["gap"])),
                ]
            )


def _cmd_solve(config: RunConfig, args) -> None:
    slot_idx = args.slot if args.slot is not None else config.solve_slot
    mf = config.mean_field()
    rows = []
    out_dir = _ensure_out_dir(config)
    for scenario in config.scenarios:
        cfg = config.slot_template(slot_idx, scenario)
        trace: list | None = [] if args.diagnostics else None
        sol = _solve_slot(
            mf, config.supply, cfg.uncertainty(), cfg, Quadrature(cfg.quadrature_nodes), trace
        )
        selections = {}
        if sol.interval is not None:
            for rule, u_sel in zip(("pessimistic", "optimistic"), sol.interval):
                pi_sel = float(config.supply.price(cfg.d0 + mf.phi(u_sel)))
                selections[rule] = (u_sel, pi_sel)
        _print_solution(scenario, slot_idx, sol, selections)
        row = {
            "scenario": scenario,
            "slot": slot_idx,
            "case": sol.case.value,
            "u_d": repr(sol.u_d),
            "pi_d": repr(sol.pi_d),
            "residual": repr(sol.residual),
            "congestion_probability": repr(sol.congestion_probability),
            "u_lower": "" if sol.interval is None else repr(sol.interval[0]),
            "u_upper": "" if sol.interval is None else repr(sol.interval[1]),
        }
        for rule in ("pessimistic", "optimistic"):
            u_key, pi_key = f"{rule}_u_d", f"{rule}_pi_d"
            if selections:
                row[u_key] = repr(selections[rule][0])
                row[pi_key] = repr(selections[rule][1])
            else:
                row[u_key] = row[pi_key] = ""
        rows.append(row)
        if args.diagnostics:
            _write_gap_diagnostics(config, cfg, scenario, out_dir, trace)
    path = os.path.join(out_dir, "solve.csv")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SOLVE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {path}")


def _print_summary(horizon) -> None:
    header, rows = summary_table(horizon)
    widths = [max(len(str(h)), 24) for h in header]
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        cells = [row[0]] + [
            f"{v:,.2f}" if isinstance(v, float) else str(v) for v in row[1:]
        ]
        print("  ".join(c.ljust(w) for c, w in zip(cells, widths)))


def _run_and_report(config: RunConfig, args, compare: bool) -> None:
    scenarios = (ANTICIPATORY, NAIVE) if compare else config.scenarios
    horizon = run_horizon(
        config.slot_templates(),
        config.population,
        scenarios=scenarios,
        workers=args.workers,
    )
    out_dir = _ensure_out_dir(config)
    flat = [r for s in scenarios for r in horizon.slots[s]]
    written = []

    if config.out_format == "csv":
        slots_path = os.path.join(out_dir, "slots.csv")
        write_slots_csv(flat, slots_path)
        written.append(slots_path)
        summary_path = os.path.join(out_dir, "summary.csv")
        write_summary_csv(horizon, summary_path)
        written.append(summary_path)
    else:
        report_path = os.path.join(out_dir, "report.txt")
        write_structured(horizon, report_path)
        written.append(report_path)

    curves_path = os.path.join(out_dir, "curves.csv")
    write_curves_csv(flat, curves_path)
    written.append(curves_path)

    if horizon.deltas is not None:
        name = "compare.csv" if compare else "deltas.csv"
        delta_path = os.path.join(out_dir, name)
        write_compare_csv(horizon, delta_path)
        written.append(delta_path)

    if config.figures:
        written.extend(render_figures(horizon, out_dir))

    for path in written:
        print(f"wrote {path}")
    _print_summary(horizon)
    if compare and horizon.deltas is not None:
        diff = horizon.totals(ANTICIPATORY)["welfare"] - horizon.totals(NAIVE)["welfare"]
        print(f"welfare difference (anticipatory - naive): {diff:,.2f} $")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            _cmd_solve(config, args)
        elif args.command == "simulate":
            _run_and_report(config, args, compare=False)
        else:
            _run_and_report(config, args, compare=True)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
