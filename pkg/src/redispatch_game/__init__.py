"""Mean-field equilibria and simulations of a two-stage day-ahead +
redispatch electricity market for flexible consumers."""

from .population import (
    Agent,
    MeanFieldDemand,
    PopulationSpec,
    dump_phi_csv,
    mean_field_from_agents,
    mean_field_from_spec,
    phi_inverse,
    sample_agents,
)
from .market_model import (
    CongestionPrice,
    CongestionRegime,
    FixedPriceSupply,
    PiecewiseLinearSupply,
    PowerLawSupply,
    SupplyCurve,
    UncertaintyModel,
    congestion_price,
    congestion_probability,
    redispatch_price,
    sample_inflexible,
    supply_price,
)
from .equilibrium import (
    CertainCongestionError,
    ConvergenceError,
    EquilibriumSolution,
    FlatSupplyError,
    MonteCarlo,
    Quadrature,
    SolutionCase,
    SolverError,
    bid_price,
    expected_excess,
    gap,
    solve_equilibrium,
    solve_fixed_price,
    solve_naive,
)
from .strategy import (
    Bid,
    DiscreteRedispatchPrice,
    EquilibriumRedispatchPrice,
    SecondStageDecision,
    TradingClass,
    classify,
    expected_welfare,
    optimal_bid,
    optimal_day_ahead,
    optimal_second_stage,
)
from .simulator import (
    ANTICIPATORY,
    NAIVE,
    HorizonReport,
    SlotConfig,
    SlotDelta,
    SlotReport,
    clear_finite_population,
    deviation_check,
    run_horizon,
    run_slot,
    theorem_bids,
)
from .config import ConfigError, RunConfig, load_config, parse_config

__version__ = "0.1.0"
