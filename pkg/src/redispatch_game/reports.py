"""Report serialization: per-slot CSVs, per-utility curves, and summaries.

Floats are written with ``repr`` so re-reading a CSV reproduces the exact
in-memory values.  Nothing here depends on wall-clock state; identical
reports serialize to identical bytes.
"""

from __future__ import annotations

import csv

from .simulator import ANTICIPATORY, NAIVE, HorizonReport, SlotReport

__all__ = [
    "SLOT_COLUMNS",
    "CURVE_COLUMNS",
    "slot_row",
    "write_slots_csv",
    "read_slots_csv",
    "write_curves_csv",
    "write_compare_csv",
    "summary_table",
    "write_summary_csv",
    "write_structured",
]

SLOT_COLUMNS = [
    "slot",
    "scenario",
    "case",
    "u_d",
    "u_lower",
    "u_upper",
    "pi_d",
    "residual",
    "congestion_probability",
    "deficit_probability",
    "congestion_frequency",
    "cleared_flexible_kwh",
    "post_flexible_kwh",
    "utility",
    "day_ahead_cost",
    "redispatch_revenue",
    "welfare",
    "dso_cost",
    "se_utility",
    "se_redispatch_revenue",
    "se_welfare",
    "conservation_gap",
    "samples",
    "seed",
]

CURVE_COLUMNS = [
    "slot",
    "scenario",
    "utility",
    "phi_kwh",
    "bid_price",
    "welfare_per_kwh",
    "p_trade_da",
    "p_trade_rd",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def slot_row(report: SlotReport) -> dict:
    sol = report.solution
    interval = sol.interval or (None, None)
    return {
        "slot": report.slot,
        "scenario": report.scenario,
        "case": sol.case.value,
        "u_d": sol.u_d,
        "u_lower": "" if interval[0] is None else interval[0],
        "u_upper": "" if interval[1] is None else interval[1],
        "pi_d": sol.pi_d,
        "residual": sol.residual,
        "congestion_probability": sol.congestion_probability,
        "deficit_probability": report.deficit_probability,
        "congestion_frequency": report.congestion_frequency,
        "cleared_flexible_kwh": report.cleared_flexible_kwh,
        "post_flexible_kwh": report.post_flexible_kwh,
        "utility": report.utility,
        "day_ahead_cost": report.day_ahead_cost,
        "redispatch_revenue": report.redispatch_revenue,
        "welfare": report.welfare,
        "dso_cost": report.dso_cost,
        "se_utility": report.se_utility,
        "se_redispatch_revenue": report.se_redispatch_revenue,
        "se_welfare": report.se_welfare,
        "conservation_gap": report.conservation_gap,
        "samples": report.config.samples,
        "seed": report.config.seed,
    }


def write_slots_csv(reports: list[SlotReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SLOT_COLUMNS)
        for report in reports:
            row = slot_row(report)
            writer.writerow([_fmt(row[c]) for c in SLOT_COLUMNS])


def read_slots_csv(path) -> list[dict]:
    """Read a slots CSV back; numeric fields are parsed to exact floats."""
    out = []
    with open(path, newline="", encoding="utf-8") as handle:
        for raw in csv.DictReader(handle):
            row: dict = {}
            for key, value in raw.items():
                if key in ("scenario", "case"):
                    row[key] = value
                elif key in ("slot", "samples", "seed"):
                    row[key] = int(value)
                elif value == "":
                    row[key] = None
                else:
                    row[key] = float(value)
            out.append(row)
    return out


def write_curves_csv(reports: list[SlotReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_COLUMNS)
        for report in reports:
            c = report.curves
            for i in range(len(c.utility)):
                writer.writerow(
                    [
                        report.slot,
                        report.scenario,
                        repr(float(c.utility[i])),
                        repr(float(c.phi_kwh[i])),
                        repr(float(c.bid_price[i])),
                        repr(float(c.welfare_per_kwh[i])),
                        repr(float(c.p_trade_da[i])),
                        repr(float(c.p_trade_rd[i])),
                    ]
                )


def write_compare_csv(horizon: HorizonReport, path) -> None:
    """Side-by-side anticipatory/naive slot table with differences."""
    ant = horizon.slots[ANTICIPATORY]
    nai = horizon.slots[NAIVE]
    columns = [
        "slot",
        "u_d_anticipatory",
        "u_d_naive",
        "pi_d_anticipatory",
        "pi_d_naive",
        "cleared_kwh_anticipatory",
        "cleared_kwh_naive",
        "demand_difference_kwh",
        "welfare_anticipatory",
        "welfare_naive",
        "welfare_difference",
        "congestion_probability_anticipatory",
        "congestion_probability_naive",
    ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for a, n in zip(ant, nai):
            writer.writerow(
                [
                    a.slot,
                    repr(a.solution.u_d),
                    repr(n.solution.u_d),
                    repr(a.solution.pi_d),
                    repr(n.solution.pi_d),
                    repr(a.cleared_flexible_kwh),
                    repr(n.cleared_flexible_kwh),
                    repr(a.cleared_flexible_kwh - n.cleared_flexible_kwh),
                    repr(a.welfare),
                    repr(n.welfare),
                    repr(a.welfare - n.welfare),
                    repr(a.solution.congestion_probability),
                    repr(n.solution.congestion_probability),
                ]
            )


def summary_table(horizon: HorizonReport) -> tuple[list[str], list[list]]:
    """Horizon totals per scenario with the classic report row labels.

    Day-ahead cost is printed as a signed cash flow (negative) so the rows
    sum to the welfare row.
    """
    scenarios = list(horizon.slots)
    header = ["metric", *scenarios]
    both = ANTICIPATORY in horizon.slots and NAIVE in horizon.slots
    if both:
        header.append("difference")
    totals = {s: horizon.totals(s) for s in scenarios}

    def row(label, key, sign=1.0):
        values = [sign * totals[s][key] for s in scenarios]
        out = [label, *values]
        if both:
            out.append(
                sign * (totals[ANTICIPATORY][key] - totals[NAIVE][key])
            )
        return out

    rows = [
        row("Utility ($)", "utility"),
        row("Redispatch revenue ($)", "redispatch_revenue"),
        row("Day-ahead cost ($)", "day_ahead_cost", sign=-1.0),
        row("Welfare ($)", "welfare"),
    ]
    if both:
        diff = totals[ANTICIPATORY]["welfare"] - totals[NAIVE]["welfare"]
        rows.append(["Welfare difference ($)", *[""] * len(scenarios), diff])
    return header, rows


def write_summary_csv(horizon: HorizonReport, path) -> None:
    header, rows = summary_table(horizon)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_structured(horizon: HorizonReport, path) -> None:
    """Human-oriented key = value blocks, one per slot and scenario."""
    with open(path, "w", encoding="utf-8") as handle:
        for scenario, reports in horizon.slots.items():
            for report in reports:
                handle.write(f"[slot {report.slot} {scenario}]\n")
                row = slot_row(report)
                for key in SLOT_COLUMNS[2:]:
                    handle.write(f"{key} = {_fmt(row[key])}\n")
                handle.write("\n")
        header, rows = summary_table(horizon)
        handle.write("[summary]\n")
        handle.write("columns = " + ", ".join(header[1:]) + "\n")
        for row in rows:
            values = ", ".join(_fmt(v) for v in row[1:])
            handle.write(f"{row[0]} = {values}\n")
