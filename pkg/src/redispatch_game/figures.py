"""Matplotlib renderings of the report curves, written next to the CSVs."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulator import ANTICIPATORY, HorizonReport

__all__ = ["render_figures"]

_STYLE = {ANTICIPATORY: dict(color="tab:red"), "naive": dict(color="tab:blue")}
_DPI = 140


def _focus_slot(horizon: HorizonReport) -> int:
    """Index of the most congestion-prone slot (first scenario's view)."""
    scenario = next(iter(horizon.slots))
    reports = horizon.slots[scenario]
    probs = [r.solution.congestion_probability for r in reports]
    return int(np.argmax(probs))


def _style(scenario: str) -> dict:
    return _STYLE.get(scenario, dict(color="tab:gray"))


def render_figures(horizon: HorizonReport, out_dir) -> list[str]:
    """Write the four standard figures; returns the file paths."""
    paths = []
    focus = _focus_slot(horizon)

    # supply vs bid curves in quantity-price space for the focus slot
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scenario, reports in horizon.slots.items():
        report = reports[focus]
        curves = report.curves
        ax.plot(
            curves.phi_kwh,
            curves.bid_price,
            label=f"{scenario} bids",
            **_style(scenario),
        )
        ax.plot(
            report.cleared_flexible_kwh,
            report.solution.pi_d,
            marker="o",
            linestyle="none",
            **_style(scenario),
        )
    report = next(iter(horizon.slots.values()))[focus]
    quantity = np.linspace(0.0, float(np.max(report.curves.phi_kwh)), 200)
    ax.plot(
        quantity,
        report.config.supply.price(report.config.d0 + quantity),
        color="black",
        linestyle="--",
        label="supply",
    )
    ax.set_xlabel("flexible quantity (kWh)")
    ax.set_ylabel("price ($/kWh)")
    ax.set_title(f"supply and bid curves, slot {focus}")
    ax.legend()
    paths.append(_save(fig, out_dir, "supply_demand.png"))

    # expected welfare per kWh against utility
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scenario, reports in horizon.slots.items():
        curves = reports[focus].curves
        ax.plot(curves.utility, curves.welfare_per_kwh, label=scenario, **_style(scenario))
    ax.set_xlabel("utility ($/kWh)")
    ax.set_ylabel("expected welfare ($/kWh)")
    ax.set_title(f"per-consumer welfare, slot {focus}")
    ax.legend()
    paths.append(_save(fig, out_dir, "welfare_curves.png"))

    # trading probabilities against utility
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scenario, reports in horizon.slots.items():
        curves = reports[focus].curves
        ax.plot(
            curves.utility,
            curves.p_trade_da,
            label=f"{scenario} day-ahead",
            **_style(scenario),
        )
        ax.plot(
            curves.utility,
            curves.p_trade_rd,
            linestyle=":",
            label=f"{scenario} redispatch",
            **_style(scenario),
        )
    ax.set_xlabel("utility ($/kWh)")
    ax.set_ylabel("probability of trading")
    ax.set_title(f"trading probabilities, slot {focus}")
    ax.legend()
    paths.append(_save(fig, out_dir, "trading_probabilities.png"))

    # normalized cleared demand across the horizon
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scenario, reports in horizon.slots.items():
        total = float(reports[0].curves.phi_kwh[0])
        levels = [r.cleared_flexible_kwh / total for r in reports]
        ax.plot(range(len(reports)), levels, marker="o", label=scenario, **_style(scenario))
    ax.set_xlabel("slot")
    ax.set_ylabel("cleared flexible demand / total")
    ax.set_title("day-ahead demand profile")
    ax.legend()
    paths.append(_save(fig, out_dir, "demand_profile.png"))
    return paths


def _save(fig, out_dir, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
