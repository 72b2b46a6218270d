"""Two-stage Monte Carlo simulation over a horizon of independent slots.

Each slot solves the day-ahead threshold for its scenario, then averages the
welfare decomposition over realizations of the inflexible-load forecast
error: consumers above the threshold buy at the clearing price; when the
realized load congests the network, everyone between the threshold and the
congestion price sells back at that price and the system operator foots the
bill.  Slots are independent, so the horizon is embarrassingly parallel; a
fixed seed yields bit-identical reports for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .equilibrium import (
    CertainCongestionError,
    ConvergenceError,
    EquilibriumSolution,
    FlatSupplyError,
    Quadrature,
    SolverError,
    _tail_expectation,
    bid_price,
    solve_equilibrium,
    solve_fixed_price,
    solve_naive,
)
from .market_model import (
    SupplyCurve,
    UncertaintyModel,
    congestion_probability,
    sample_inflexible,
)
from .population import (
    Agent,
    MeanFieldDemand,
    PopulationSpec,
    mean_field_from_spec,
)
from .strategy import Bid, OPTIMISTIC, PESSIMISTIC

__all__ = [
    "ANTICIPATORY",
    "NAIVE",
    "SlotConfig",
    "SlotCurves",
    "SlotReport",
    "SlotDelta",
    "HorizonReport",
    "run_slot",
    "run_horizon",
    "clear_finite_population",
    "deviation_check",
]

ANTICIPATORY = "anticipatory"
NAIVE = "naive"
SCENARIOS = (ANTICIPATORY, NAIVE)


@dataclass(frozen=True)
class SlotConfig:
    """Everything one slot needs: market, uncertainty, scenario, sampling."""

    d0: float
    capacity: float
    supply: SupplyCurve
    sigma: float
    scenario: str = ANTICIPATORY
    rule: str = OPTIMISTIC
    samples: int = 10_000
    seed: int = 0
    truncation: float = 6.0
    quadrature_nodes: int = 129
    tolerance: float = 1e-9
    max_iterations: int = 200
    curve_points: int = 200
    slot: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.rule not in (OPTIMISTIC, PESSIMISTIC):
            raise ValueError("indifference rule must be 'optimistic' or 'pessimistic'")
        if self.samples < 1:
            raise ValueError("sample count must be at least 1")
        if self.d0 < 0 or self.capacity <= 0 or self.sigma < 0:
            raise ValueError("d0, capacity and sigma must be non-negative (capacity positive)")

    def uncertainty(self) -> UncertaintyModel:
        return UncertaintyModel(self.sigma, self.d0, self.capacity, self.truncation)


@dataclass(frozen=True)
class SlotCurves:
    """Per-utility expected quantities on a fixed grid (plot-ready)."""

    utility: np.ndarray
    phi_kwh: np.ndarray
    bid_price: np.ndarray
    welfare_per_kwh: np.ndarray
    p_trade_da: np.ndarray
    p_trade_rd: np.ndarray


@dataclass(frozen=True)
class SlotReport:
    """Expected welfare decomposition of one slot under one scenario.

    Monetary fields are $ per slot for the whole population; the identity
    welfare = utility - day_ahead_cost + redispatch_revenue holds exactly,
    and dso_cost mirrors redispatch_revenue (money conservation).
    """

    slot: int
    scenario: str
    config: SlotConfig = field(repr=False)
    solution: EquilibriumSolution
    cleared_flexible_kwh: float
    post_flexible_kwh: float
    utility: float
    day_ahead_cost: float
    redispatch_revenue: float
    welfare: float
    dso_cost: float
    se_utility: float
    se_redispatch_revenue: float
    se_welfare: float
    congestion_frequency: float
    deficit_probability: float
    conservation_gap: float
    curves: SlotCurves = field(repr=False)


@dataclass(frozen=True)
class SlotDelta:
    """Anticipatory-minus-naive differences for one slot."""

    slot: int
    u_d: float
    welfare: float
    utility: float
    redispatch_revenue: float
    day_ahead_cost: float
    cleared_flexible_kwh: float


@dataclass(frozen=True)
class HorizonReport:
    """Slot reports per scenario plus componentwise scenario deltas."""

    slots: dict[str, list[SlotReport]]
    deltas: list[SlotDelta] | None = None

    def totals(self, scenario: str) -> dict[str, float]:
        reports = self.slots[scenario]
        return {
            "utility": sum(r.utility for r in reports),
            "redispatch_revenue": sum(r.redispatch_revenue for r in reports),
            "day_ahead_cost": sum(r.day_ahead_cost for r in reports),
            "welfare": sum(r.welfare for r in reports),
        }


def _solve_slot(mf, supply, unc, cfg, method, trace=None) -> EquilibriumSolution:
    """Scenario-appropriate solve with fallback to the interval solver when
    supply is flat or congestion is certain."""
    if cfg.scenario == ANTICIPATORY:
        try:
            return solve_equilibrium(
                mf, supply, unc, method, cfg.tolerance, cfg.max_iterations, trace
            )
        except (FlatSupplyError, CertainCongestionError):
            return solve_fixed_price(
                mf,
                supply,
                unc,
                method,
                cfg.tolerance,
                cfg.max_iterations,
                rule=cfg.rule,
                trace=trace,
            )
    try:
        return solve_naive(mf, supply, unc, cfg.tolerance, cfg.max_iterations, trace)
    except FlatSupplyError:
        return solve_fixed_price(
            mf,
            supply,
            unc,
            method,
            cfg.tolerance,
            cfg.max_iterations,
            rule=cfg.rule,
            naive=True,
            trace=trace,
        )


def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(np.sum(values) / n)
    if n < 2:
        return mean, 0.0
    var = float(np.sum((values - mean) ** 2) / (n - 1))
    return mean, float(np.sqrt(max(var, 0.0) / n))


def run_slot(cfg: SlotConfig, population: PopulationSpec, trace=None) -> SlotReport:
    """Solve one slot and average its welfare decomposition over MC draws."""
    mf = mean_field_from_spec(population)
    unc = cfg.uncertainty()
    method = Quadrature(cfg.quadrature_nodes)
    try:
        sol = _solve_slot(mf, cfg.supply, unc, cfg, method, trace)
    except ConvergenceError as err:
        raise ConvergenceError(f"slot {cfg.slot}: {err}", err.bracket) from err
    except SolverError as err:
        raise type(err)(f"slot {cfg.slot}: {err}") from err

    u_eff = min(max(sol.u_d, mf.u_min), mf.u_max)
    draws = sample_inflexible(unc, cfg.seed, cfg.samples)
    residual = cfg.capacity - cfg.d0 - draws
    uc = np.asarray(mf.phi_inverse(residual))
    buyback = np.where(uc > u_eff, uc, 0.0)
    congested = buyback > 0.0

    cleared = float(mf.phi(u_eff))
    da_cost = sol.pi_d * cleared
    consume_threshold = np.maximum(u_eff, buyback)
    utility_k = np.asarray(mf.utility_above(consume_threshold))
    post_flex_k = np.asarray(mf.phi(consume_threshold))
    revenue_k = buyback * (cleared - post_flex_k)
    welfare_k = utility_k - da_cost + revenue_k

    utility_mean, utility_se = _mean_and_se(utility_k)
    revenue_mean, revenue_se = _mean_and_se(revenue_k)
    _, welfare_se = _mean_and_se(welfare_k)
    welfare_mean = utility_mean - da_cost + revenue_mean
    post_flex_mean = float(np.sum(post_flex_k) / cfg.samples)

    interior = congested & (residual > 0.0) & (residual < mf.total_demand)
    if np.any(interior):
        total_post = cfg.d0 + draws[interior] + post_flex_k[interior]
        conservation_gap = float(np.max(np.abs(total_post - cfg.capacity)))
    else:
        conservation_gap = 0.0

    ugrid = np.linspace(mf.u_min, mf.u_max, cfg.curve_points)
    excess_grid = np.asarray(
        _tail_expectation(mf, unc, ugrid, np.maximum(ugrid, u_eff), method)
    )
    margin_grid = ugrid - sol.pi_d + excess_grid
    trade = ugrid > sol.u_d
    curves = SlotCurves(
        utility=ugrid,
        phi_kwh=np.asarray(mf.phi(ugrid)),
        bid_price=(ugrid + excess_grid) if cfg.scenario == ANTICIPATORY else ugrid.copy(),
        welfare_per_kwh=np.where(trade, margin_grid, 0.0),
        p_trade_da=trade.astype(float),
        p_trade_rd=np.where(
            trade,
            np.asarray(congestion_probability(mf, unc, np.maximum(ugrid, u_eff))),
            0.0,
        ),
    )

    return SlotReport(
        slot=cfg.slot,
        scenario=cfg.scenario,
        config=cfg,
        solution=sol,
        cleared_flexible_kwh=cleared,
        post_flexible_kwh=post_flex_mean,
        utility=utility_mean,
        day_ahead_cost=da_cost,
        redispatch_revenue=revenue_mean,
        welfare=welfare_mean,
        dso_cost=revenue_mean,
        se_utility=utility_se,
        se_redispatch_revenue=revenue_se,
        se_welfare=welfare_se,
        congestion_frequency=float(np.sum(congested) / cfg.samples),
        deficit_probability=float(unc.tail_probability(cfg.capacity - cfg.d0)),
        conservation_gap=conservation_gap,
        curves=curves,
    )


def _slot_seed(root: int, slot: int, scenario: str) -> int:
    code = SCENARIOS.index(scenario)
    seq = np.random.SeedSequence([int(root), int(slot), code])
    return int(seq.generate_state(1, np.uint64)[0])


def run_horizon(
    configs: list[SlotConfig],
    population: PopulationSpec,
    scenarios: tuple[str, ...] = SCENARIOS,
    workers: int | None = None,
) -> HorizonReport:
    """Run every slot under every scenario; slots are independent.

    Per-slot seeds are derived from each config's seed, slot index and
    scenario, so reports are bit-identical for any ``workers`` value.
    """
    if not configs:
        raise ValueError("need at least one slot config")
    for s in scenarios:
        if s not in SCENARIOS:
            raise ValueError(f"unknown scenario {s!r}")

    jobs = [
        replace(cfg, scenario=s, slot=i, seed=_slot_seed(cfg.seed, i, s))
        for s in scenarios
        for i, cfg in enumerate(configs)
    ]
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run_slot(c, population), jobs))
    else:
        results = [run_slot(c, population) for c in jobs]

    per_scenario: dict[str, list[SlotReport]] = {}
    for s_index, s in enumerate(scenarios):
        per_scenario[s] = results[s_index * len(configs) : (s_index + 1) * len(configs)]

    deltas = None
    if ANTICIPATORY in per_scenario and NAIVE in per_scenario:
        deltas = [
            SlotDelta(
                slot=a.slot,
                u_d=a.solution.u_d - n.solution.u_d,
                welfare=a.welfare - n.welfare,
                utility=a.utility - n.utility,
                redispatch_revenue=a.redispatch_revenue - n.redispatch_revenue,
                day_ahead_cost=a.day_ahead_cost - n.day_ahead_cost,
                cleared_flexible_kwh=a.cleared_flexible_kwh - n.cleared_flexible_kwh,
            )
            for a, n in zip(per_scenario[ANTICIPATORY], per_scenario[NAIVE])
        ]
    return HorizonReport(slots=per_scenario, deltas=deltas)


def _supply_inverse(supply: SupplyCurve, target: float, x_lo: float, x_hi: float) -> float:
    """Quantity in [x_lo, x_hi] where the supply price reaches ``target``."""
    for _ in range(100):
        mid = 0.5 * (x_lo + x_hi)
        if supply.price(mid) < target:
            x_lo = mid
        else:
            x_hi = mid
    return 0.5 * (x_lo + x_hi)


def clear_finite_population(
    agents: list[Agent], bids: list[Bid], d0: float, supply: SupplyCurve
) -> tuple[float, np.ndarray]:
    """Pay-as-cleared merit-order clearing of one bid per agent.

    Bids are sorted by price (descending) and accepted while they stay above
    the supply price at the accumulated quantity shifted by the inflexible
    load ``d0``.  Bids strictly above the clearing price are filled, bids
    strictly below are rejected, and the group at the crossing is filled
    pro-rata.  Returns the clearing price and per-agent allocations.
    """
    if not agents:
        raise ValueError("cannot clear an empty population")
    if len(bids) != len(agents):
        raise ValueError("need exactly one bid per agent")
    prices = np.array([b.price for b in bids], dtype=float)
    quantities = np.array([b.quantity for b in bids], dtype=float)
    order = np.argsort(-prices, kind="stable")
    ps, qs = prices[order], quantities[order]
    alloc = np.zeros(len(agents))

    # group equal-price bids; cumulative quantities assume full acceptance,
    # which is exact up to the first group that fails to clear
    starts = np.flatnonzero(np.r_[True, ps[1:] != ps[:-1]])
    ends = np.r_[starts[1:], len(ps)]
    group_price = ps[starts]
    group_qty = np.add.reduceat(qs, starts)
    cum_after = np.cumsum(group_qty)
    cum_before = cum_after - group_qty
    price_before = np.asarray(supply.price(d0 + cum_before))
    price_after = np.asarray(supply.price(d0 + cum_after))

    failing = np.flatnonzero(group_price <= price_after)
    if failing.size == 0:
        # demand exhausts above supply: everything clears at the marginal cost
        return float(price_after[-1]), quantities.copy()
    g = int(failing[0])
    alloc[order[: starts[g]]] = qs[: starts[g]]
    if group_price[g] <= price_before[g]:
        # demand stepped below supply before this group opened
        return float(price_before[g]), alloc
    # supply crosses inside group g: clear at its price, fill pro-rata
    x_star = (
        _supply_inverse(
            supply,
            float(group_price[g]),
            d0 + float(cum_before[g]),
            d0 + float(cum_after[g]),
        )
        - d0
    )
    fraction = (x_star - float(cum_before[g])) / float(group_qty[g])
    members = order[starts[g] : ends[g]]
    alloc[members] = quantities[members] * np.clip(fraction, 0.0, 1.0)
    return float(group_price[g]), alloc


def theorem_bids(
    agents: list[Agent],
    mf: MeanFieldDemand,
    unc: UncertaintyModel,
    u_d: float,
    method=Quadrature(),
) -> list[Bid]:
    """Optimal bids of sampled agents against the cleared mean field."""
    us = np.array([a.utility for a in agents])
    prices = np.asarray(bid_price(us, u_d, mf, unc, method))
    return [
        Bid(quantity=a.e_max, price=float(p)) for a, p in zip(agents, prices)
    ]


def deviation_check(
    report: SlotReport, population: PopulationSpec, n_probe: int, seed
) -> float:
    """Best unilateral welfare improvement found by grid-probing bids.

    For ``n_probe`` random consumers, sweeps a bid-price x quantity grid
    against the slot's clearing price while holding the mean field (clearing
    price and buy-back distribution) fixed, and returns the largest gain over
    the scenario's prescribed strategy.  Near zero certifies an equilibrium;
    strictly positive gains expose the naive strategy in congested slots.
    """
    if n_probe < 1:
        raise ValueError("need at least one probe agent")
    cfg = report.config
    sol = report.solution
    mf = mean_field_from_spec(population)
    unc = cfg.uncertainty()
    method = Quadrature(cfg.quadrature_nodes)
    u_eff = min(max(sol.u_d, mf.u_min), mf.u_max)

    rng = np.random.default_rng(seed)
    us = rng.uniform(population.utility_min, population.utility_max, n_probe)
    es = rng.uniform(population.emax_min, population.emax_max, n_probe)

    excess = np.asarray(_tail_expectation(mf, unc, us, np.maximum(us, u_eff), method))
    margin = us - sol.pi_d + excess
    own_bid = us + excess if cfg.scenario == ANTICIPATORY else us
    own_welfare = es * margin * (own_bid > sol.pi_d)

    price_grid = np.linspace(0.0, 1.5 * max(mf.u_max, sol.pi_d), 61)
    accepted = price_grid > sol.pi_d
    fractions = np.linspace(0.0, 1.0, 5)
    candidate = (
        es[:, None, None]
        * fractions[None, None, :]
        * margin[:, None, None]
        * accepted[None, :, None]
    )
    best = candidate.max(axis=(1, 2))
    return float(np.max(best - own_welfare))
