import numpy as np
import pytest

from redispatch_game import (
    ANTICIPATORY,
    NAIVE,
    Agent,
    Bid,
    FixedPriceSupply,
    PowerLawSupply,
    SlotConfig,
    SolutionCase,
    TradingClass,
    UncertaintyModel,
    classify,
    clear_finite_population,
    deviation_check,
    mean_field_from_spec,
    run_horizon,
    run_slot,
    sample_agents,
    sample_inflexible,
    solve_equilibrium,
    theorem_bids,
)
from conftest import PROFILE_KWH

TWO_AGENTS = [Agent(0.15, 5.0), Agent(0.12, 5.0)]


def _slot(d0, capacity, supply, sigma, scenario=ANTICIPATORY, samples=2_000, seed=1, **kw):
    return SlotConfig(
        d0=d0,
        capacity=capacity,
        supply=supply,
        sigma=sigma,
        scenario=scenario,
        samples=samples,
        seed=seed,
        **kw,
    )


# -- merit-order clearing ----------------------------------------------------


def test_clearing_two_agent_example():
    bids = [Bid(5.0, 0.2), Bid(5.0, 0.1)]
    pi_d, alloc = clear_finite_population(TWO_AGENTS, bids, 0.0, FixedPriceSupply(0.15))
    assert pi_d == pytest.approx(0.15)
    assert alloc.tolist() == [5.0, 0.0]


def test_clearing_nothing_accepted(base_supply):
    # every bid sits below the supply price at the inflexible load alone
    bids = [Bid(5.0, 0.01), Bid(5.0, 0.02)]
    pi_d, alloc = clear_finite_population(TWO_AGENTS, bids, 1.2e5, base_supply)
    assert pi_d == pytest.approx(base_supply.price(1.2e5))
    assert alloc.tolist() == [0.0, 0.0]


def test_clearing_pro_rata_at_price():
    # linear supply crosses inside the equal-price group: split pro-rata
    supply = PowerLawSupply(scale=0.2, reference=10.0, exponent=1.0)
    agents = [Agent(0.1, 5.0), Agent(0.11, 5.0)]
    bids = [Bid(5.0, 0.1), Bid(5.0, 0.1)]
    pi_d, alloc = clear_finite_population(agents, bids, 0.0, supply)
    assert pi_d == pytest.approx(0.1)
    assert alloc.tolist() == pytest.approx([2.5, 2.5], abs=1e-6)


def test_clearing_all_accepted():
    supply = FixedPriceSupply(0.05)
    bids = [Bid(5.0, 0.2), Bid(5.0, 0.1)]
    pi_d, alloc = clear_finite_population(TWO_AGENTS, bids, 0.0, supply)
    assert pi_d == pytest.approx(0.05)
    assert alloc.tolist() == [5.0, 5.0]


def test_clearing_validation(base_supply):
    with pytest.raises(ValueError):
        clear_finite_population([], [], 0.0, base_supply)
    with pytest.raises(ValueError):
        clear_finite_population(TWO_AGENTS, [Bid(5.0, 0.1)], 0.0, base_supply)


def test_finite_population_approaches_mean_field(base_spec, base_mf, base_supply, base_unc):
    sol = solve_equilibrium(base_mf, base_supply, base_unc)
    hits = 0
    for seed in range(5):
        agents = sample_agents(base_spec, seed=seed)
        bids = theorem_bids(agents, base_mf, base_unc, sol.u_d)
        pi_d, alloc = clear_finite_population(agents, bids, base_unc.d0, base_supply)
        if abs(pi_d - sol.pi_d) < 1e-3:
            hits += 1
        # accepted quantity tracks the mean-field cleared demand
        assert np.sum(alloc) == pytest.approx(base_mf.phi(sol.u_d), rel=0.05)
    assert hits >= 4


# -- run_slot ----------------------------------------------------------------


def test_slot_never_congested(base_spec, base_supply):
    report = run_slot(_slot(10_000.0, 300_000.0, base_supply, 10_000.0), base_spec)
    assert report.redispatch_revenue == 0.0
    assert report.dso_cost == 0.0
    assert report.congestion_frequency == 0.0
    assert report.welfare == pytest.approx(report.utility - report.day_ahead_cost)
    assert report.solution.congestion_probability == 0.0


def test_slot_deterministic_interior_congestion(base_spec, base_supply):
    # sigma = 0 with tight capacity: everyone trades, congestion is certain,
    # and the buy-back trims the load exactly to the line limit
    report = run_slot(
        _slot(80_000.0, 100_000.0, base_supply, 0.0, samples=64), base_spec
    )
    assert report.solution.case is SolutionCase.ALL_TRADE
    assert report.congestion_frequency == 1.0
    assert report.post_flexible_kwh + 80_000.0 == pytest.approx(100_000.0, abs=1e-6)
    assert report.conservation_gap <= 1e-6 * 100_000.0


def test_slot_accounting_identity(base_spec, base_supply):
    for scenario in (ANTICIPATORY, NAIVE):
        report = run_slot(
            _slot(84_000.0, 120_000.0, base_supply, 5_000.0, scenario=scenario),
            base_spec,
        )
        assert report.welfare == report.utility - report.day_ahead_cost + report.redispatch_revenue
        assert report.dso_cost == report.redispatch_revenue


def test_slot_anticipatory_collects_more_redispatch(base_spec, base_supply):
    anticipatory = run_slot(
        _slot(84_000.0, 120_000.0, base_supply, 5_000.0, samples=20_000), base_spec
    )
    naive = run_slot(
        _slot(84_000.0, 120_000.0, base_supply, 5_000.0, NAIVE, samples=20_000),
        base_spec,
    )
    assert anticipatory.redispatch_revenue > naive.redispatch_revenue
    assert anticipatory.solution.u_d <= naive.solution.u_d
    assert anticipatory.cleared_flexible_kwh >= naive.cleared_flexible_kwh


def test_slot_redispatchers_are_the_middle_band(base_spec, base_mf, base_supply):
    # in every draw the consumers selling back are exactly those between the
    # threshold and the buy-back price
    cfg = _slot(84_000.0, 120_000.0, base_supply, 5_000.0, samples=50)
    report = run_slot(cfg, base_spec)
    u_eff = min(max(report.solution.u_d, base_mf.u_min), base_mf.u_max)
    draws = sample_inflexible(cfg.uncertainty(), cfg.seed, cfg.samples)
    agents = sample_agents(base_spec, seed=99)[:500]
    for d in draws[:10]:
        uc = base_mf.phi_inverse(cfg.capacity - cfg.d0 - float(d))
        pi_r = uc if uc > u_eff else 0.0
        u_r = pi_r if pi_r > 0.0 else u_eff
        for agent in agents:
            outcome = classify(agent.utility, u_eff, u_r)
            in_band = u_eff < agent.utility < pi_r
            if outcome is TradingClass.DAY_AHEAD_AND_REDISPATCH:
                assert in_band
            elif outcome in (TradingClass.NO_TRADE, TradingClass.DAY_AHEAD_ONLY):
                assert not in_band


def test_slot_standard_error_scaling(base_spec, base_supply):
    small = run_slot(
        _slot(84_000.0, 120_000.0, base_supply, 5_000.0, samples=4_000, seed=5),
        base_spec,
    )
    large = run_slot(
        _slot(84_000.0, 120_000.0, base_supply, 5_000.0, samples=16_000, seed=5),
        base_spec,
    )
    assert small.se_welfare > 0
    # quadrupling the sample count halves the standard error, statistically
    ratio = small.se_welfare / large.se_welfare
    assert 1.6 <= ratio <= 2.4


def test_slot_rejects_bad_config(base_supply):
    with pytest.raises(ValueError):
        SlotConfig(d0=1.0, capacity=1.0, supply=base_supply, sigma=0.0, scenario="bold")
    with pytest.raises(ValueError):
        SlotConfig(d0=1.0, capacity=1.0, supply=base_supply, sigma=0.0, samples=0)


# -- run_horizon -------------------------------------------------------------


def _horizon_configs(capacity, supply, samples=500, seed=1):
    return [
        SlotConfig(d0=d, capacity=capacity, supply=supply, sigma=5_000.0,
                   samples=samples, seed=seed, slot=i)
        for i, d in enumerate(PROFILE_KWH)
    ]


def test_horizon_deltas_match_components(base_spec, base_supply):
    horizon = run_horizon(_horizon_configs(120_000.0, base_supply), base_spec)
    assert horizon.deltas is not None and len(horizon.deltas) == 24
    for delta, a, n in zip(
        horizon.deltas, horizon.slots[ANTICIPATORY], horizon.slots[NAIVE]
    ):
        assert delta.welfare == a.welfare - n.welfare
        assert delta.cleared_flexible_kwh == a.cleared_flexible_kwh - n.cleared_flexible_kwh


def test_horizon_single_scenario_has_no_deltas(base_spec, base_supply):
    horizon = run_horizon(
        _horizon_configs(120_000.0, base_supply)[:3],
        base_spec,
        scenarios=(ANTICIPATORY,),
    )
    assert horizon.deltas is None
    assert list(horizon.slots) == [ANTICIPATORY]


def test_horizon_scenarios_coincide_without_congestion(base_spec, base_supply):
    horizon = run_horizon(_horizon_configs(150_000.0, base_supply), base_spec)
    for delta in horizon.deltas:
        assert abs(delta.welfare) <= 1e-6
        assert abs(delta.cleared_flexible_kwh) <= 1e-6


def test_horizon_congested_slots_aggravated(base_spec, base_supply):
    horizon = run_horizon(_horizon_configs(120_000.0, base_supply), base_spec)
    for a, delta in zip(horizon.slots[ANTICIPATORY], horizon.deltas):
        assert delta.cleared_flexible_kwh >= -1e-9
        if a.solution.congestion_probability > 0.1:
            assert delta.cleared_flexible_kwh > 0.0


def test_horizon_bitwise_deterministic_and_parallel(base_spec, base_supply):
    configs = _horizon_configs(120_000.0, base_supply, samples=300)
    first = run_horizon(configs, base_spec)
    second = run_horizon(configs, base_spec)
    parallel = run_horizon(configs, base_spec, workers=4)
    for a, b, c in zip(
        first.slots[ANTICIPATORY], second.slots[ANTICIPATORY], parallel.slots[ANTICIPATORY]
    ):
        assert a.welfare == b.welfare == c.welfare
        assert a.solution.u_d == b.solution.u_d == c.solution.u_d
        assert a.se_welfare == b.se_welfare == c.se_welfare
        assert np.array_equal(a.curves.welfare_per_kwh, c.curves.welfare_per_kwh)


def test_horizon_requires_slots(base_spec):
    with pytest.raises(ValueError):
        run_horizon([], base_spec)


# -- deviation_check ---------------------------------------------------------


def test_deviation_anticipatory_is_equilibrium(base_spec, base_supply):
    report = run_slot(_slot(84_000.0, 120_000.0, base_supply, 5_000.0), base_spec)
    gain = deviation_check(report, base_spec, n_probe=100, seed=11)
    assert gain <= 1e-6


def test_deviation_naive_is_improvable_when_congested(base_spec, base_supply):
    report = run_slot(_slot(84_000.0, 120_000.0, base_supply, 5_000.0, NAIVE), base_spec)
    gain = deviation_check(report, base_spec, n_probe=100, seed=11)
    assert gain > 0.0


def test_deviation_never_congested_both_scenarios(base_spec, base_supply):
    for scenario in (ANTICIPATORY, NAIVE):
        report = run_slot(
            _slot(10_000.0, 300_000.0, base_supply, 10_000.0, scenario), base_spec
        )
        assert deviation_check(report, base_spec, n_probe=100, seed=11) <= 1e-6


def test_theorem_bids_match_bid_price(base_spec, base_mf, base_unc):
    from redispatch_game import bid_price

    agents = sample_agents(base_spec, seed=0)[:50]
    bids = theorem_bids(agents, base_mf, base_unc, u_d=0.12)
    for agent, bid in zip(agents, bids):
        assert bid.quantity == agent.e_max
        assert bid.price == pytest.approx(
            float(bid_price(agent.utility, 0.12, base_mf, base_unc))
        )
