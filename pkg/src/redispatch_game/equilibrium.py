"""Anticipatory bidding and the day-ahead threshold fixed point.

Consumers who anticipate being paid to reduce congestion pad their day-ahead
bids with the expected buy-back payout.  In the large-population limit the
cleared market is summarized by one threshold utility u_d: everyone above it
buys, everyone below stays out.  The threshold is a root of the monotone gap

    gap(u) = u + expected_excess(u) - supply_price(d0 + phi(u)),

located by bisection.  With strictly increasing supply and congestion that is
not a sure thing the gap is strictly increasing and the root unique; under a
fixed day-ahead price (or certain congestion) the gap can be flat at zero and
the solution degenerates to an interval, handled by the fixed-price solver.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .market_model import (
    SupplyCurve,
    UncertaintyModel,
    congestion_probability,
    sample_inflexible,
)
from .population import MeanFieldDemand

__all__ = [
    "Quadrature",
    "MonteCarlo",
    "SolutionCase",
    "EquilibriumSolution",
    "SolverError",
    "ConvergenceError",
    "FlatSupplyError",
    "CertainCongestionError",
    "expected_excess",
    "bid_price",
    "gap",
    "solve_equilibrium",
    "solve_naive",
    "solve_fixed_price",
]

# congestion counts as certain once its probability exceeds 1 - this epsilon
CERTAIN_CONGESTION_EPS = 1e-12
# gap values within this band of zero count as "flat at zero" in interval location
FLAT_ZERO_TOL = 1e-12

PESSIMISTIC = "pessimistic"
OPTIMISTIC = "optimistic"
_QUAD_CHUNK = 2048
_MC_CHUNK = 64


class SolverError(RuntimeError):
    """Base class for equilibrium-solver failures."""


class ConvergenceError(SolverError):
    """Bisection ran out of iterations; carries the last bracket."""

    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


class FlatSupplyError(SolverError):
    """Supply is not strictly increasing; use solve_fixed_price instead."""


class CertainCongestionError(SolverError):
    """Congestion is (numerically) a sure thing; use solve_fixed_price instead."""


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Legendre expectation over the truncated forecast-error support,
    split at the integrand's kinks so each piece is smooth."""

    nodes: int = 129

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("node count must be positive")


@dataclass(frozen=True)
class MonteCarlo:
    """Plain Monte Carlo expectation with a fixed seed (deterministic)."""

    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("sample count must be positive")


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _tail_expectation_quadrature(mf, unc, u_flat, m_flat, nodes):
    """E[(Uc - u) * 1{Uc > m}] with Uc = phi_inverse(c - d0 - D).

    The event threshold m is clipped into [u_min, u_max]: a buy-back happens
    only when the network actually congests, so thresholds below the lowest
    utility cannot collect on congestion-free draws where Uc merely clamps
    at u_min.
    """
    c, d0 = unc.capacity, unc.d0
    m_eff = np.clip(m_flat, mf.u_min, mf.u_max)
    if unc.sigma == 0.0:
        uc = mf.phi_inverse(c - d0)
        return np.where(uc > m_eff, uc - u_flat, 0.0)

    lo, hi = unc.support
    lower = np.clip(c - d0 - mf.phi(m_eff), lo, hi)
    # the threshold curve switches formula where residual capacity hits the
    # total demand and where it hits zero; integrate each smooth piece alone
    b0 = lower
    b1 = np.clip(c - d0 - mf.total_demand, b0, hi)
    b2 = np.clip(c - d0, b1, hi)
    b3 = np.full_like(b0, hi)
    edges = np.stack([b0, b1, b2, b3], axis=-1)

    x, w = _gauss_legendre(nodes)
    out = np.empty_like(u_flat)
    for start in range(0, len(u_flat), _QUAD_CHUNK):
        sl = slice(start, start + _QUAD_CHUNK)
        a = edges[sl, :-1][..., None]
        b = edges[sl, 1:][..., None]
        half = 0.5 * (b - a)
        delta = 0.5 * (a + b) + half * x
        uc = mf.phi_inverse(c - d0 - delta)
        integrand = (uc - u_flat[sl, None, None]) * unc.density(delta)
        out[sl] = np.sum(np.sum(integrand * w, axis=-1) * half[..., 0], axis=-1)
    out = np.where(m_flat >= mf.u_max, 0.0, out)
    return np.clip(out, 0.0, None)


def _tail_expectation_mc(mf, unc, u_flat, m_flat, samples, seed):
    draws = sample_inflexible(unc, seed, samples)
    uc = mf.phi_inverse(unc.capacity - unc.d0 - draws)
    m_eff = np.clip(m_flat, mf.u_min, mf.u_max)
    out = np.empty_like(u_flat)
    for start in range(0, len(u_flat), _MC_CHUNK):
        sl = slice(start, start + _MC_CHUNK)
        vals = (uc[None, :] - u_flat[sl, None]) * (uc[None, :] > m_eff[sl, None])
        out[sl] = np.sum(vals, axis=1) / samples
    return np.clip(out, 0.0, None)


def _tail_expectation(mf, unc, u, m, method):
    u_b, m_b = np.broadcast_arrays(np.asarray(u, float), np.asarray(m, float))
    if not np.all(np.isfinite(u_b)):
        raise ValueError("utility arguments must be finite")
    shape = u_b.shape
    u_flat = u_b.ravel().astype(float)
    m_flat = m_b.ravel().astype(float)
    if isinstance(method, Quadrature):
        out = _tail_expectation_quadrature(mf, unc, u_flat, m_flat, method.nodes)
    elif isinstance(method, MonteCarlo):
        out = _tail_expectation_mc(mf, unc, u_flat, m_flat, method.samples, method.seed)
    else:
        raise TypeError(f"unknown expectation method: {method!r}")
    out = out.reshape(shape)
    return out if shape else float(out)


def expected_excess(u_d, mf: MeanFieldDemand, unc: UncertaintyModel, method=Quadrature()):
    """Expected congestion-price excess over ``u_d``: E[[Uc - u_d]^+].

    This is the premium an anticipating consumer at the threshold adds to its
    truthful bid.  Non-negative; zero when the network cannot congest above
    ``u_d``.  Accepts scalars or arrays.
    """
    return _tail_expectation(mf, unc, u_d, u_d, method)


def bid_price(u, u_d, mf: MeanFieldDemand, unc: UncertaintyModel, method=Quadrature()):
    """Optimal day-ahead bid price of a consumer with utility ``u``.

    Equals u plus the expected payout of congestion events whose price clears
    both the consumer's own utility and the market threshold ``u_d``; always
    at least ``u``.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise ValueError("utilities must be non-negative")
    m = np.maximum(u_arr, u_d)
    out = u_arr + _tail_expectation(mf, unc, u_arr, m, method)
    return out if np.ndim(u) else float(out)


def gap(
    u,
    mf: MeanFieldDemand,
    supply: SupplyCurve,
    unc: UncertaintyModel,
    method=Quadrature(),
    naive: bool = False,
):
    """Bid price on the diagonal minus the supply price at the cleared demand.

    Strictly increasing whenever supply is strictly increasing or congestion
    is uncertain; its root is the market threshold.  ``naive=True`` drops the
    anticipation premium (truthful bidding).
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise ValueError("thresholds must be non-negative")
    bid = u_arr if naive else u_arr + _tail_expectation(mf, unc, u_arr, u_arr, method)
    out = bid - supply.price(unc.d0 + mf.phi(u_arr))
    return out if np.ndim(u) else float(out)


class SolutionCase(enum.Enum):
    ALL_TRADE = "all_trade"
    NONE_TRADE = "none_trade"
    INTERIOR = "interior"
    INTERVAL = "interval"


@dataclass(frozen=True)
class EquilibriumSolution:
    """Threshold u_d, clearing price, and how the solution was pinned down.

    ``interval`` carries the (lower, upper) indifference range for the
    fixed-price/certain-congestion regime; the reported u_d is then the
    selected end.  ``congestion_probability`` is evaluated at the effective
    threshold (u_d clipped into the population's utility range).
    """

    u_d: float
    pi_d: float
    case: SolutionCase
    residual: float
    congestion_probability: float
    interval: tuple[float, float] | None = None

    @property
    def effective_u_d(self) -> float:
        # all-trade reports u_d = 0 although no consumer sits below u_min;
        # downstream threshold logic uses the clipped value
        return self.u_d


def _record(trace, **row):
    if trace is not None:
        trace.append(row)


def _finish(mf, supply, unc, u_d, case, residual, interval=None):
    pi_d = float(supply.price(unc.d0 + mf.phi(u_d)))
    clipped = min(max(u_d, mf.u_min), mf.u_max)
    conq = float(congestion_probability(mf, unc, clipped))
    return EquilibriumSolution(
        u_d=float(u_d),
        pi_d=pi_d,
        case=case,
        residual=float(residual),
        congestion_probability=conq,
        interval=interval,
    )


def _solve_monotone(gapf, mf, supply, unc, tol, max_iter, trace):
    lo, hi = mf.u_min, mf.u_max
    g_lo = gapf(lo)
    g_hi = gapf(hi)
    _record(trace, iteration=0, lo=lo, hi=hi, mid=lo, gap=g_lo)
    _record(trace, iteration=0, lo=lo, hi=hi, mid=hi, gap=g_hi)
    if g_lo > tol:
        # supply already above every bid at the lowest utility: everyone trades
        return _finish(mf, supply, unc, 0.0, SolutionCase.ALL_TRADE, g_lo)
    if g_hi < -tol:
        return _finish(mf, supply, unc, hi, SolutionCase.NONE_TRADE, abs(g_hi))
    if abs(g_lo) <= tol:
        return _finish(mf, supply, unc, lo, SolutionCase.INTERIOR, abs(g_lo))
    if abs(g_hi) <= tol:
        return _finish(mf, supply, unc, hi, SolutionCase.INTERIOR, abs(g_hi))
    for iteration in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        g_mid = gapf(mid)
        _record(trace, iteration=iteration, lo=lo, hi=hi, mid=mid, gap=g_mid)
        if abs(g_mid) < tol:
            return _finish(mf, supply, unc, mid, SolutionCase.INTERIOR, abs(g_mid))
        if g_mid > 0.0:
            hi = mid
        else:
            lo = mid
    raise ConvergenceError(
        f"bisection did not reach residual {tol} in {max_iter} iterations",
        bracket=(lo, hi, gapf(lo), gapf(hi)),
    )


def solve_equilibrium(
    mf: MeanFieldDemand,
    supply: SupplyCurve,
    unc: UncertaintyModel,
    method=Quadrature(),
    tol: float = 1e-9,
    max_iter: int = 200,
    trace: list | None = None,
) -> EquilibriumSolution:
    """Unique anticipatory threshold for strictly increasing supply.

    Preconditions are checked up front: a flat (fixed-price) supply or a
    congestion probability indistinguishable from one at u_min both raise a
    :class:`SolverError` pointing to :func:`solve_fixed_price`, which
    tolerates the resulting flat gap.
    """
    if not supply.strictly_increasing:
        raise FlatSupplyError(
            "supply curve is not strictly increasing; solve_fixed_price handles "
            "flat segments"
        )
    if congestion_probability(mf, unc, mf.u_min) > 1.0 - CERTAIN_CONGESTION_EPS:
        raise CertainCongestionError(
            "congestion is certain for every threshold; solve_fixed_price handles "
            "this regime"
        )
    gapf = lambda u: float(gap(u, mf, supply, unc, method))
    return _solve_monotone(gapf, mf, supply, unc, tol, max_iter, trace)


def solve_naive(
    mf: MeanFieldDemand,
    supply: SupplyCurve,
    unc: UncertaintyModel,
    tol: float = 1e-9,
    max_iter: int = 200,
    trace: list | None = None,
) -> EquilibriumSolution:
    """Threshold when consumers bid their utility truthfully.

    The gap reduces to u - supply_price(d0 + phi(u)), which is strictly
    increasing regardless of congestion, so only flat supply is rejected.
    The realized welfare accounting still pays redispatch revenue; naive
    consumers simply ignore it when bidding.
    """
    if not supply.strictly_increasing:
        raise FlatSupplyError(
            "supply curve is not strictly increasing; solve_fixed_price handles "
            "flat segments (pass naive=True)"
        )
    gapf = lambda u: float(gap(u, mf, supply, unc, naive=True))
    return _solve_monotone(gapf, mf, supply, unc, tol, max_iter, trace)


def _bisect_predicate(pred, lo, hi, tol, max_iter):
    """Smallest u with pred(u) true, assuming pred flips false->true once.

    Requires pred(lo) false and pred(hi) true; returns the true-side end of
    the final bracket so the predicate holds at the result.
    """
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def solve_fixed_price(
    mf: MeanFieldDemand,
    supply: SupplyCurve,
    unc: UncertaintyModel,
    method=Quadrature(),
    tol: float = 1e-9,
    max_iter: int = 200,
    rule: str = OPTIMISTIC,
    naive: bool = False,
    trace: list | None = None,
) -> EquilibriumSolution:
    """Threshold interval for flat supply or certain congestion.

    The gap is monotone but may sit exactly at zero over an interval; its
    ends are located separately:

        u_lower = inf{u : gap(u) >= 0},   u_upper = inf{u : gap(u) > 0}

    (with a 1e-12 zero band).  Every threshold in between clears the market;
    ``rule`` selects the pessimistic (lower: all indifferent consumers trade)
    or optimistic (upper: none do) end as the reported u_d.  Without a sign
    change the all-trade / none-trade boundary cases apply unchanged.
    """
    if rule not in (PESSIMISTIC, OPTIMISTIC):
        raise ValueError(f"rule must be '{PESSIMISTIC}' or '{OPTIMISTIC}'")

    def gapf(u):
        return float(gap(u, mf, supply, unc, method, naive=naive))

    z = FLAT_ZERO_TOL
    g_zero = gapf(0.0)
    g_max = gapf(mf.u_max)
    _record(trace, iteration=0, lo=0.0, hi=mf.u_max, mid=0.0, gap=g_zero)
    _record(trace, iteration=0, lo=0.0, hi=mf.u_max, mid=mf.u_max, gap=g_max)
    if g_max < -z:
        return _finish(mf, supply, unc, mf.u_max, SolutionCase.NONE_TRADE, abs(g_max))
    if g_zero > z:
        return _finish(mf, supply, unc, 0.0, SolutionCase.ALL_TRADE, g_zero)

    if g_zero >= -z:
        u_lower = 0.0
    else:
        u_lower = _bisect_predicate(
            lambda u: gapf(u) >= -z, 0.0, mf.u_max, tol, max_iter
        )
    if g_max <= z:
        u_upper = mf.u_max
    else:
        u_upper = _bisect_predicate(lambda u: gapf(u) > z, 0.0, mf.u_max, tol, max_iter)
    u_upper = max(u_upper, u_lower)
    u_d = u_lower if rule == PESSIMISTIC else u_upper
    return _finish(
        mf,
        supply,
        unc,
        u_d,
        SolutionCase.INTERVAL,
        abs(gapf(u_d)),
        interval=(u_lower, u_upper),
    )
