"""Run configuration: YAML schema, validation, and slot-config construction.

The schema is strict: unknown keys are rejected with their dotted path so a
typo cannot silently fall back to a default.  Energies accept either
``*_kwh`` or ``*_mw`` keys; megawatt values are converted assuming one-hour
slots (120 MW -> 120000 kWh).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import yaml

from .population import MeanFieldDemand, PopulationSpec, mean_field_from_spec
from .market_model import (
    FixedPriceSupply,
    PiecewiseLinearSupply,
    PowerLawSupply,
    SupplyCurve,
)
from .simulator import ANTICIPATORY, NAIVE, SCENARIOS, SlotConfig
from .strategy import OPTIMISTIC, PESSIMISTIC

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

MW_TO_KWH = 1000.0  # one-hour slots


class ConfigError(Exception):
    """Configuration file is missing, malformed, or violates the schema."""


def _reject_unknown(section: dict, allowed: set, path: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'")


def _get(section: dict, key: str, path: str, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key '{path}.{key}'")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"'{path}.{key}' must be of type {kind.__name__}")
    return value


def _energy(section: dict, base: str, path: str, required=True):
    """Read `<base>_kwh` or `<base>_mw` (exactly one)."""
    kwh_key, mw_key = f"{base}_kwh", f"{base}_mw"
    has_kwh, has_mw = kwh_key in section, mw_key in section
    if has_kwh and has_mw:
        raise ConfigError(f"give exactly one of '{path}.{kwh_key}' and '{path}.{mw_key}'")
    if not (has_kwh or has_mw):
        if required:
            raise ConfigError(f"missing '{path}.{kwh_key}' (or '{path}.{mw_key}')")
        return None
    key = kwh_key if has_kwh else mw_key
    value = section[key]
    scale = 1.0 if has_kwh else MW_TO_KWH
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * scale
    if isinstance(value, list):
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"'{path}.{key}' must contain numbers only")
        return [float(v) * scale for v in value]
    raise ConfigError(f"'{path}.{key}' must be a number or a list of numbers")


def _range(section: dict, key: str, path: str) -> tuple[float, float]:
    value = section.get(key)
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"'{path}.{key}' must be a [low, high] pair")
    return float(value[0]), float(value[1])


@dataclass(frozen=True)
class RunConfig:
    """Validated run description: population, market, horizon, and outputs."""

    population: PopulationSpec
    supply: SupplyCurve
    sigma: float
    truncation: float
    capacity: float
    inflexible: tuple[float, ...]
    scenarios: tuple[str, ...]
    rule: str
    samples: int
    seed: int
    tolerance: float
    max_iterations: int
    quadrature_nodes: int
    solve_slot: int
    out_dir: str
    out_format: str
    figures: bool

    def mean_field(self) -> MeanFieldDemand:
        return mean_field_from_spec(self.population)

    def slot_templates(self) -> list[SlotConfig]:
        """One scenario-agnostic SlotConfig per inflexible-profile entry."""
        return [
            SlotConfig(
                d0=d0,
                capacity=self.capacity,
                supply=self.supply,
                sigma=self.sigma,
                rule=self.rule,
                samples=self.samples,
                seed=self.seed,
                truncation=self.truncation,
                quadrature_nodes=self.quadrature_nodes,
                tolerance=self.tolerance,
                max_iterations=self.max_iterations,
                slot=i,
            )
            for i, d0 in enumerate(self.inflexible)
        ]

    def slot_template(self, slot: int, scenario: str = ANTICIPATORY) -> SlotConfig:
        templates = self.slot_templates()
        if not 0 <= slot < len(templates):
            raise ConfigError(
                f"slot {slot} outside the profile (0..{len(templates) - 1})"
            )
        return replace(templates[slot], scenario=scenario)


def _parse_supply(section: dict) -> SupplyCurve:
    kind = _get(section, "kind", "supply", str, required=True)
    try:
        if kind == "power_law":
            _reject_unknown(
                section,
                {"kind", "scale", "exponent", "reference_kwh", "reference_mw"},
                "supply",
            )
            return PowerLawSupply(
                scale=_get(section, "scale", "supply", float, required=True),
                reference=_energy(section, "reference", "supply"),
                exponent=_get(section, "exponent", "supply", float, required=True),
            )
        if kind == "fixed_price":
            _reject_unknown(section, {"kind", "price"}, "supply")
            return FixedPriceSupply(
                price_level=_get(section, "price", "supply", float, required=True)
            )
        if kind == "piecewise_linear":
            _reject_unknown(section, {"kind", "points"}, "supply")
            points = section.get("points")
            if not isinstance(points, list) or not all(
                isinstance(p, list) and len(p) == 2 for p in points
            ):
                raise ConfigError("'supply.points' must be a list of [kwh, price] pairs")
            return PiecewiseLinearSupply(
                quantities=tuple(float(p[0]) for p in points),
                prices=tuple(float(p[1]) for p in points),
            )
    except ValueError as err:
        raise ConfigError(f"supply: {err}") from err
    raise ConfigError(f"unknown supply kind '{kind}'")


def parse_config(raw: dict, source: str = "<config>") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    _reject_unknown(
        raw,
        {"population", "supply", "network", "uncertainty", "solver", "simulation", "output"},
        source,
    )
    for name in ("population", "supply", "network", "uncertainty"):
        if name not in raw or not isinstance(raw[name], dict):
            raise ConfigError(f"missing required section '{name}'")

    pop = raw["population"]
    _reject_unknown(pop, {"agents", "utility_range", "e_max_range"}, "population")
    u_lo, u_hi = _range(pop, "utility_range", "population")
    e_lo, e_hi = _range(pop, "e_max_range", "population")
    try:
        population = PopulationSpec(
            agent_count=_get(pop, "agents", "population", int, required=True),
            utility_min=u_lo,
            utility_max=u_hi,
            emax_min=e_lo,
            emax_max=e_hi,
        )
    except ValueError as err:
        raise ConfigError(f"population: {err}") from err

    supply = _parse_supply(raw["supply"])

    net = raw["network"]
    _reject_unknown(
        net, {"capacity_kwh", "capacity_mw", "inflexible_kwh", "inflexible_mw"}, "network"
    )
    capacity = _energy(net, "capacity", "network")
    if not isinstance(capacity, float):
        raise ConfigError("'network.capacity_*' must be a single number")
    inflexible = _energy(net, "inflexible", "network")
    if isinstance(inflexible, float):
        inflexible = [inflexible]
    if not inflexible or any(v < 0 for v in inflexible):
        raise ConfigError("'network.inflexible_*' must be non-negative values")

    unc = raw["uncertainty"]
    _reject_unknown(unc, {"sigma_kwh", "sigma_mw", "truncation"}, "uncertainty")
    sigma = _energy(unc, "sigma", "uncertainty")
    if not isinstance(sigma, float) or sigma < 0:
        raise ConfigError("'uncertainty.sigma_*' must be a non-negative number")
    truncation = _get(unc, "truncation", "uncertainty", float, default=6.0)
    if truncation <= 0:
        raise ConfigError("'uncertainty.truncation' must be positive")

    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("'solver' must be a mapping")
    _reject_unknown(
        solver,
        {"tolerance", "max_iterations", "quadrature_nodes", "indifference_rule"},
        "solver",
    )
    tolerance = _get(solver, "tolerance", "solver", float, default=1e-9)
    max_iterations = _get(solver, "max_iterations", "solver", int, default=200)
    quadrature_nodes = _get(solver, "quadrature_nodes", "solver", int, default=129)
    rule = _get(solver, "indifference_rule", "solver", str, default=OPTIMISTIC)
    if rule not in (OPTIMISTIC, PESSIMISTIC):
        raise ConfigError("'solver.indifference_rule' must be optimistic or pessimistic")
    if tolerance <= 0 or max_iterations < 1 or quadrature_nodes < 1:
        raise ConfigError("solver tolerances and counts must be positive")

    sim = raw.get("simulation", {})
    if not isinstance(sim, dict):
        raise ConfigError("'simulation' must be a mapping")
    _reject_unknown(sim, {"scenarios", "samples", "seed", "solve_slot"}, "simulation")
    scenarios_raw = sim.get("scenarios", [ANTICIPATORY, NAIVE])
    if (
        not isinstance(scenarios_raw, list)
        or not scenarios_raw
        or any(s not in SCENARIOS for s in scenarios_raw)
    ):
        raise ConfigError(f"'simulation.scenarios' must be a non-empty subset of {SCENARIOS}")
    samples = _get(sim, "samples", "simulation", int, default=10_000)
    seed = _get(sim, "seed", "simulation", int, default=1)
    solve_slot = _get(sim, "solve_slot", "simulation", int, default=0)
    if samples < 1:
        raise ConfigError("'simulation.samples' must be at least 1")
    if not 0 <= solve_slot < len(inflexible):
        raise ConfigError("'simulation.solve_slot' outside the inflexible profile")

    out = raw.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("'output' must be a mapping")
    _reject_unknown(out, {"directory", "format", "figures"}, "output")
    out_dir = _get(out, "directory", "output", str, default="out")
    out_format = _get(out, "format", "output", str, default="csv")
    if out_format not in ("csv", "structured"):
        raise ConfigError("'output.format' must be csv or structured")
    figures = _get(out, "figures", "output", bool, default=True)

    return RunConfig(
        population=population,
        supply=supply,
        sigma=sigma,
        truncation=truncation,
        capacity=capacity,
        inflexible=tuple(inflexible),
        scenarios=tuple(dict.fromkeys(scenarios_raw)),
        rule=rule,
        samples=samples,
        seed=seed,
        tolerance=tolerance,
        max_iterations=max_iterations,
        quadrature_nodes=quadrature_nodes,
        solve_slot=solve_slot,
        out_dir=out_dir,
        out_format=out_format,
        figures=figures,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse config {path}: {err}") from err
    return parse_config(raw, source=str(path))
