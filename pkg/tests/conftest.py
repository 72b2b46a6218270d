import numpy as np
import pytest

from redispatch_game import (
    PopulationSpec,
    PowerLawSupply,
    UncertaintyModel,
    congestion_probability,
    gap,
    mean_field_from_spec,
)

# base experiment: 10^4 consumers, utilities on [0.01, 0.3] $/kWh, maximum
# consumptions on [3, 10] kWh, power-law supply anchored at 0.15 $/kWh for
# 120 MWh, medium capacity 120 MWh, forecast error sd 10 MWh
BASE_SPEC = PopulationSpec(10_000, 0.01, 0.3, 3.0, 10.0)
BASE_SUPPLY = PowerLawSupply(scale=0.15, reference=1.2e5, exponent=1.5)
BASE_UNC = UncertaintyModel(sigma=10_000.0, d0=80_000.0, capacity=120_000.0)

# synthetic 24-slot inflexible profile (kWh): night peak so the medium
# capacity congests slots 0-5 and 21-23, the trough stays clear
PROFILE_KWH = [
    84_000.0, 83_000.0, 82_000.0, 80_500.0, 79_000.0, 77_500.0,
    70_000.0, 63_000.0, 58_000.0, 55_000.0, 53_000.0, 52_000.0,
    51_500.0, 52_000.0, 53_500.0, 56_000.0, 59_000.0, 63_000.0,
    67_000.0, 71_000.0, 75_000.0, 78_500.0, 81_500.0, 83_500.0,
]


@pytest.fixture(scope="session")
def base_spec():
    return BASE_SPEC


@pytest.fixture(scope="session")
def base_mf():
    return mean_field_from_spec(BASE_SPEC)


@pytest.fixture(scope="session")
def base_supply():
    return BASE_SUPPLY


@pytest.fixture(scope="session")
def base_unc():
    return BASE_UNC


def random_interior_setup(rng):
    """Random strictly-increasing-supply market with an interior root and
    congestion that is not a sure thing (rejection-sampled, deterministic)."""
    while True:
        u_min = float(rng.uniform(0.005, 0.05))
        u_max = u_min + float(rng.uniform(0.1, 0.45))
        spec = PopulationSpec(
            agent_count=int(rng.integers(2_000, 20_000)),
            utility_min=u_min,
            utility_max=u_max,
            emax_min=float(rng.uniform(1.0, 5.0)),
            emax_max=float(rng.uniform(5.0, 15.0)),
        )
        mf = mean_field_from_spec(spec)
        total = mf.total_demand
        d0 = float(rng.uniform(0.3, 1.5)) * total
        capacity = d0 + float(rng.uniform(0.2, 1.4)) * total
        sigma = float(rng.uniform(0.03, 0.3)) * total
        supply = PowerLawSupply(
            scale=float(rng.uniform(0.3, 1.2)) * u_max,
            reference=(d0 + 0.7 * total) * float(rng.uniform(0.8, 1.3)),
            exponent=float(rng.uniform(1.0, 2.5)),
        )
        unc = UncertaintyModel(sigma=sigma, d0=d0, capacity=capacity)
        if congestion_probability(mf, unc, mf.u_min) > 1.0 - 1e-9:
            continue
        g_lo = gap(mf.u_min, mf, supply, unc)
        g_hi = gap(mf.u_max, mf, supply, unc)
        if g_lo < -1e-6 and g_hi > 1e-6:
            return spec, mf, supply, unc
