"""Optimal per-consumer decisions in the two-stage market.

Given a buy-back price, the second stage is a one-sided linear program: sell
everything back when the price beats your utility, keep everything when it
does not.  Folding that into the first stage makes the expected welfare of a
day-ahead purchase linear in the purchased quantity,

    welfare = e_d * (u - pi_d + E[[buyback - u]^+]),

so the optimal schedule is bang-bang and the optimal bid simply prices the
anticipated buy-back premium into the quantity bid at maximum consumption.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .equilibrium import Quadrature, _tail_expectation
from .market_model import UncertaintyModel
from .population import MeanFieldDemand

__all__ = [
    "DiscreteRedispatchPrice",
    "EquilibriumRedispatchPrice",
    "SecondStageDecision",
    "Bid",
    "TradingClass",
    "optimal_second_stage",
    "expected_welfare",
    "optimal_day_ahead",
    "optimal_bid",
    "classify",
]

PESSIMISTIC = "pessimistic"
OPTIMISTIC = "optimistic"
INDIFFERENCE_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteRedispatchPrice:
    """Finitely supported buy-back price; expectations by enumeration."""

    prices: tuple
    probabilities: tuple

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=float)
        w = np.asarray(self.probabilities, dtype=float)
        if p.shape != w.shape or p.ndim != 1 or p.size == 0:
            raise ValueError("prices and probabilities must be equally sized vectors")
        if np.any(p < 0):
            raise ValueError("buy-back prices must be non-negative")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be non-negative and sum to one")
        object.__setattr__(self, "prices", tuple(float(v) for v in p))
        object.__setattr__(self, "probabilities", tuple(float(v) for v in w))

    def excess(self, u):
        """E[[price - u]^+]."""
        p = np.asarray(self.prices)
        w = np.asarray(self.probabilities)
        u_arr = np.asarray(u, dtype=float)
        out = np.sum(w * np.clip(p - u_arr[..., None], 0.0, None), axis=-1)
        return out if np.ndim(u) else float(out)

    def expected_max(self, u):
        """E[max(u, price)] for u >= 0."""
        return u + self.excess(u)


@dataclass(frozen=True)
class EquilibriumRedispatchPrice:
    """Buy-back price implied by the cleared market: the congestion price when
    it exceeds the day-ahead threshold, zero otherwise."""

    mf: MeanFieldDemand
    unc: UncertaintyModel
    threshold: float
    method: object = Quadrature()

    def excess(self, u):
        u_arr = np.asarray(u, dtype=float)
        if np.any(u_arr < 0):
            raise ValueError("utilities must be non-negative")
        m = np.maximum(u_arr, min(max(self.threshold, self.mf.u_min), self.mf.u_max))
        out = _tail_expectation(self.mf, self.unc, u_arr, m, self.method)
        return out if np.ndim(u) else float(out)

    def expected_max(self, u):
        return u + self.excess(u)


@dataclass(frozen=True)
class SecondStageDecision:
    """Energy sold back in redispatch; flagged when the consumer is indifferent."""

    reduction: float
    indifferent: bool = False


@dataclass(frozen=True)
class Bid:
    """Day-ahead bid: quantity in kWh at a price in $/kWh."""

    quantity: float
    price: float

    def __post_init__(self):
        if self.quantity < 0:
            raise ValueError("bid quantity must be non-negative")
        if self.price < 0:
            raise ValueError("bid price must be non-negative")


def optimal_second_stage(e_d: float, pi_r: float, u: float) -> SecondStageDecision:
    """Sell the whole purchased schedule back iff the buy-back price beats u.

    A tie leaves the consumer indifferent; the decision returned is zero
    reduction with the flag set.
    """
    if e_d < 0:
        raise ValueError("purchased schedule must be non-negative")
    if pi_r > u:
        return SecondStageDecision(e_d)
    if pi_r < u:
        return SecondStageDecision(0.0)
    return SecondStageDecision(0.0, indifferent=True)


def expected_welfare(e_d: float, pi_d: float, u: float, redispatch_dist) -> float:
    """Expected welfare of buying ``e_d`` at ``pi_d`` with rational stage two.

    Linear in e_d: consumption utility, minus the day-ahead cost, plus the
    expected buy-back upside per kWh.
    """
    if e_d < 0:
        raise ValueError("purchased schedule must be non-negative")
    return e_d * (u - pi_d + float(redispatch_dist.excess(u)))


def optimal_day_ahead(
    u: float,
    e_max: float,
    pi_d: float,
    redispatch_dist,
    rule: str = OPTIMISTIC,
    indifference_tol: float = INDIFFERENCE_TOL,
) -> tuple[float, bool]:
    """Bang-bang optimal purchase: everything or nothing by the sign of the
    per-kWh welfare margin.

    Within ``indifference_tol`` of zero margin the consumer is indifferent;
    the configured rule breaks the tie (pessimistic: trade, optimistic: do
    not).  Returns (schedule, indifferent-flag).
    """
    if e_max < 0:
        raise ValueError("maximum consumption must be non-negative")
    margin = u - pi_d + float(redispatch_dist.excess(u))
    if abs(margin) <= indifference_tol:
        return (e_max if rule == PESSIMISTIC else 0.0), True
    return (e_max if margin > 0 else 0.0), False


def optimal_bid(u: float, e_max: float, redispatch_dist) -> Bid:
    """Bid maximum consumption at the utility padded by the buy-back premium.

    Pay-as-cleared acceptance of this bid reproduces the optimal schedule for
    every clearing price that does not tie with the bid.
    """
    if e_max < 0:
        raise ValueError("maximum consumption must be non-negative")
    return Bid(quantity=e_max, price=float(redispatch_dist.expected_max(u)))


class TradingClass(enum.Enum):
    NO_TRADE = "no_trade"
    DAY_AHEAD_AND_REDISPATCH = "day_ahead_and_redispatch"
    DAY_AHEAD_ONLY = "day_ahead_only"
    INDIFFERENT = "indifferent"


def classify(u: float, u_d: float, u_r: float) -> TradingClass:
    """Ordered outcome of a consumer by utility: out, in-and-out, or in.

    Consumers below the day-ahead threshold stay out; between the thresholds
    they buy and sell back; above the buy-back price they just consume.
    Exact ties are indifferent.
    """
    if u_d > u_r:
        raise ValueError(
            f"day-ahead threshold {u_d} cannot exceed the buy-back threshold {u_r}"
        )
    if u == u_d or u == u_r:
        return TradingClass.INDIFFERENT
    if u < u_d:
        return TradingClass.NO_TRADE
    if u < u_r:
        return TradingClass.DAY_AHEAD_AND_REDISPATCH
    return TradingClass.DAY_AHEAD_ONLY
