"""Market-side primitives: supply curves, load uncertainty, congestion pricing.

The network side of a slot is the anticipated inflexible load d0, its
zero-mean normal forecast error D (optionally truncated), and the line
capacity c.  When realized load plus flexible demand exceeds capacity, the
system operator buys back consumption starting from the lowest-utility
buyers; the congestion price is the utility threshold at which the remaining
demand just fits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .population import MeanFieldDemand

__all__ = [
    "SupplyCurve",
    "PowerLawSupply",
    "FixedPriceSupply",
    "PiecewiseLinearSupply",
    "UncertaintyModel",
    "CongestionRegime",
    "CongestionPrice",
    "supply_price",
    "congestion_price",
    "congestion_probability",
    "redispatch_price",
    "sample_inflexible",
]


class SupplyCurve:
    """Maps total day-ahead demand (kWh) to the clearing price ($/kWh)."""

    strictly_increasing: bool = False

    def price(self, x):
        raise NotImplementedError

    def _validate(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0):
            raise ValueError("supply curves are defined for non-negative demand only")
        return arr


@dataclass(frozen=True)
class PowerLawSupply(SupplyCurve):
    """price(x) = scale * (x / reference) ** exponent, strictly increasing."""

    scale: float
    reference: float
    exponent: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.reference > 0:
            raise ValueError("reference quantity must be positive")
        if not self.exponent >= 1:
            raise ValueError("exponent below 1 would bend the curve concave at zero")

    strictly_increasing = True

    def price(self, x):
        arr = self._validate(x)
        out = self.scale * (arr / self.reference) ** self.exponent
        return out if np.ndim(x) else float(out)


@dataclass(frozen=True)
class FixedPriceSupply(SupplyCurve):
    """Perfectly elastic supply at one price; flags the fixed-price regime."""

    price_level: float

    def __post_init__(self):
        if not self.price_level >= 0:
            raise ValueError("fixed price must be non-negative")

    strictly_increasing = False

    def price(self, x):
        arr = self._validate(x)
        out = np.full_like(arr, self.price_level)
        return out if np.ndim(x) else float(out)


@dataclass(frozen=True)
class PiecewiseLinearSupply(SupplyCurve):
    """Interpolates sorted (quantity, price) knots; extrapolates the end slope."""

    quantities: tuple
    prices: tuple

    def __post_init__(self):
        q = np.asarray(self.quantities, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        if q.size < 2 or q.shape != p.shape:
            raise ValueError("need at least two (quantity, price) knots")
        if q[0] < 0 or np.any(np.diff(q) <= 0):
            raise ValueError("knot quantities must be non-negative and increasing")
        if np.any(p < 0) or np.any(np.diff(p) < 0):
            raise ValueError("knot prices must be non-negative and non-decreasing")
        object.__setattr__(self, "quantities", tuple(float(v) for v in q))
        object.__setattr__(self, "prices", tuple(float(v) for v in p))

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.prices) > 0))

    def price(self, x):
        arr = self._validate(x)
        q = np.asarray(self.quantities)
        p = np.asarray(self.prices)
        out = np.interp(arr, q, p)
        end_slope = (p[-1] - p[-2]) / (q[-1] - q[-2])
        out = np.where(arr > q[-1], p[-1] + (arr - q[-1]) * end_slope, out)
        return out if np.ndim(x) else float(out)


def supply_price(curve: SupplyCurve, x):
    """Price of serving total demand ``x`` kWh under ``curve``."""
    return curve.price(x)


@dataclass(frozen=True)
class UncertaintyModel:
    """Inflexible-load forecast: anticipated level d0, normal error, capacity.

    ``sigma`` is the standard deviation of the forecast error D (kWh); the
    distribution is symmetrically truncated at ``truncation`` sigmas and
    renormalized, which keeps quadrature supports finite.  ``capacity`` is
    the network limit for the slot (kWh).
    """

    sigma: float
    d0: float
    capacity: float
    truncation: float = 6.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.truncation > 0:
            raise ValueError("truncation must be positive")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if self.d0 < 0:
            raise ValueError("anticipated inflexible demand must be non-negative")

    @property
    def support(self) -> tuple[float, float]:
        half = self.truncation * self.sigma
        return (-half, half)

    @property
    def _mass(self) -> float:
        # probability a plain normal lands inside the truncation window
        return float(2.0 * ndtr(self.truncation) - 1.0)

    def tail_probability(self, x):
        """P(D > x) under the truncated distribution; handles sigma == 0."""
        x_arr = np.asarray(x, dtype=float)
        if self.sigma == 0.0:
            out = np.where(x_arr < 0.0, 1.0, 0.0)
        else:
            z = x_arr / self.sigma
            k = self.truncation
            out = (ndtr(k) - ndtr(z)) / self._mass
            out = np.clip(np.where(z <= -k, 1.0, np.where(z >= k, 0.0, out)), 0.0, 1.0)
        return out if np.ndim(x) else float(out)

    def density(self, x):
        """Truncated-normal density of D, zero outside the support."""
        x_arr = np.asarray(x, dtype=float)
        if self.sigma == 0.0:
            raise ValueError("density is not defined for sigma == 0")
        z = x_arr / self.sigma
        inside = np.abs(z) <= self.truncation
        base = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))
        out = np.where(inside, base / self._mass, 0.0)
        return out if np.ndim(x) else float(out)


def sample_inflexible(unc: UncertaintyModel, seed, n: int) -> np.ndarray:
    """Draw ``n`` forecast errors D, deterministic per seed.

    Uses inverse-CDF sampling of the truncated normal so the draws follow
    exactly the distribution the quadrature integrates against.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    base = rng.random(n)
    if unc.sigma == 0.0:
        return np.zeros(n)
    k = unc.truncation
    lo = ndtr(-k)
    quantiles = lo + base * (ndtr(k) - lo)
    return unc.sigma * ndtri(quantiles)


class CongestionRegime(enum.Enum):
    INTERIOR = "interior"
    ALWAYS_CONGESTED = "always_congested"
    NEVER_CONGESTED = "never_congested"


@dataclass(frozen=True)
class CongestionPrice:
    """Utility threshold that makes post-redispatch load fit the capacity."""

    value: float
    regime: CongestionRegime


def congestion_price(
    mf: MeanFieldDemand, unc: UncertaintyModel, d_realized: float
) -> CongestionPrice:
    """Threshold utility at which residual capacity is exactly used up.

    Residual capacity q = capacity - d0 - d_realized.  q <= 0 means even
    zero flexible demand overloads the line (threshold pinned at u_max);
    q >= total demand means the line never binds (pinned at u_min).
    """
    q = unc.capacity - unc.d0 - d_realized
    if q <= 0.0:
        return CongestionPrice(mf.u_max, CongestionRegime.ALWAYS_CONGESTED)
    if q >= mf.total_demand:
        return CongestionPrice(mf.u_min, CongestionRegime.NEVER_CONGESTED)
    return CongestionPrice(float(mf.phi_inverse(q)), CongestionRegime.INTERIOR)


def congestion_probability(mf: MeanFieldDemand, unc: UncertaintyModel, threshold):
    """P(congestion price exceeds ``threshold``) before D is realized."""
    t_arr = np.asarray(threshold, dtype=float)
    margin = unc.capacity - unc.d0 - mf.phi(np.clip(t_arr, mf.u_min, mf.u_max))
    out = np.where(
        t_arr >= mf.u_max,
        0.0,
        np.where(t_arr < mf.u_min, 1.0, unc.tail_probability(margin)),
    )
    return out if np.ndim(threshold) else float(out)


def redispatch_price(uc: CongestionPrice, u_d: float) -> float:
    """Buy-back price paid per kWh of reduction: zero without congestion.

    Congestion (given the cleared threshold ``u_d``) means the congestion
    price sits strictly above ``u_d``; ties go to the no-congestion branch.
    """
    if u_d < 0:
        raise ValueError("day-ahead threshold must be non-negative")
    return 0.0 if uc.value <= u_d else uc.value
