"""Consumer populations: finite samples and their aggregate demand curves.

A flexible consumer is described by a utility (willingness to pay, $/kWh)
and a maximum energy consumption (kWh).  The aggregate view of a population
is the tail-demand curve phi(u): the total energy demanded by consumers
whose utility is at least u.  phi and its inverse drive both day-ahead
clearing and congestion pricing, so they are exposed with an exact closed
form for uniformly distributed populations and as an empirical step curve
for sampled ones.

All energies are kWh, all prices $/kWh.  Objects are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Agent",
    "PopulationSpec",
    "MeanFieldDemand",
    "sample_agents",
    "mean_field_from_spec",
    "mean_field_from_agents",
    "phi_inverse",
    "dump_phi_csv",
]


@dataclass(frozen=True)
class Agent:
    """One flexible consumer: utility in $/kWh and maximum consumption in kWh."""

    utility: float
    e_max: float

    def __post_init__(self):
        if not self.utility > 0:
            raise ValueError(f"agent utility must be positive, got {self.utility}")
        if not self.e_max > 0:
            raise ValueError(f"agent e_max must be positive, got {self.e_max}")


@dataclass(frozen=True)
class PopulationSpec:
    """Population with utilities and maximum consumptions drawn independently
    and uniformly from the given intervals."""

    agent_count: int
    utility_min: float
    utility_max: float
    emax_min: float
    emax_max: float

    def __post_init__(self):
        if self.agent_count < 1:
            raise ValueError("agent_count must be at least 1")
        if not 0 < self.utility_min < self.utility_max:
            raise ValueError(
                f"need 0 < utility_min < utility_max, got "
                f"[{self.utility_min}, {self.utility_max}]"
            )
        if not 0 < self.emax_min <= self.emax_max:
            raise ValueError(
                f"need 0 < emax_min <= emax_max, got [{self.emax_min}, {self.emax_max}]"
            )

    @property
    def mean_emax(self) -> float:
        return 0.5 * (self.emax_min + self.emax_max)

    @property
    def total_demand(self) -> float:
        """Expected aggregate maximum consumption of the whole population."""
        return self.agent_count * self.mean_emax


def sample_agents(spec: PopulationSpec, seed) -> list[Agent]:
    """Draw the population described by ``spec``.

    Deterministic for a fixed seed: utilities are drawn first, then the
    maximum consumptions, each as one uniform block.
    """
    rng = np.random.default_rng(seed)
    utilities = rng.uniform(spec.utility_min, spec.utility_max, spec.agent_count)
    emaxes = rng.uniform(spec.emax_min, spec.emax_max, spec.agent_count)
    return [Agent(float(u), float(e)) for u, e in zip(utilities, emaxes)]


@dataclass(frozen=True)
class MeanFieldDemand:
    """Aggregate tail-demand curve phi(u) with its inverse.

    ``knots_u``/``knots_phi`` describe either a piecewise-linear curve
    (continuous populations, strictly decreasing between u_min and u_max) or
    an empirical step curve built from sampled agents (``step=True``).  phi
    equals ``total_demand`` below u_min and vanishes above u_max.

    The step form exists as a finite-population oracle; solvers expect the
    continuous form.
    """

    knots_u: np.ndarray
    knots_phi: np.ndarray
    step: bool = False
    # step curves keep per-utility energies so tail statistics stay exact
    atom_energy: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        ku = np.asarray(self.knots_u, dtype=float)
        kp = np.asarray(self.knots_phi, dtype=float)
        object.__setattr__(self, "knots_u", ku)
        object.__setattr__(self, "knots_phi", kp)
        if ku.ndim != 1 or ku.shape != kp.shape or ku.size < 1:
            raise ValueError("knot arrays must be one-dimensional and equally sized")
        if np.any(np.diff(ku) <= 0):
            raise ValueError("utility knots must be strictly increasing")
        if np.any(np.diff(kp) > 0):
            raise ValueError("phi knots must be non-increasing")
        if not self.step:
            if ku.size < 2:
                raise ValueError("a continuous curve needs at least two knots")
            if np.any(np.diff(kp) >= 0):
                raise ValueError("continuous phi must be strictly decreasing between knots")
            if kp[-1] != 0.0:
                raise ValueError("continuous phi must reach zero at the last knot")

    @property
    def u_min(self) -> float:
        return float(self.knots_u[0])

    @property
    def u_max(self) -> float:
        return float(self.knots_u[-1])

    @property
    def total_demand(self) -> float:
        return float(self.knots_phi[0])

    # -- evaluation ------------------------------------------------------

    def phi(self, u):
        """Total demand of consumers with utility at least ``u`` (kWh)."""
        u_arr = np.asarray(u, dtype=float)
        if self.step:
            idx = np.searchsorted(self.knots_u, u_arr, side="left")
            tails = np.append(self.knots_phi, 0.0)
            out = tails[idx]
        else:
            out = np.interp(u_arr, self.knots_u, self.knots_phi)
        return out if np.ndim(u) else float(out)

    def eta(self, u):
        """Demand density (kWh per $/kWh); piecewise constant for linear curves."""
        if self.step:
            raise ValueError("density is not defined for an empirical step curve")
        u_arr = np.asarray(u, dtype=float)
        seg = np.clip(np.searchsorted(self.knots_u, u_arr, side="right") - 1, 0, None)
        inside = (u_arr >= self.u_min) & (u_arr <= self.u_max)
        seg = np.clip(seg, 0, len(self._segment_density) - 1)
        out = np.where(inside, self._segment_density[seg], 0.0)
        return out if np.ndim(u) else float(out)

    def phi_inverse(self, q):
        """Utility threshold whose tail demand matches ``q`` kWh.

        Clamps: u_max for q <= 0, u_min for q >= total_demand.  On a step
        curve the result is the lowest agent utility whose tail does not
        exceed ``q`` (so a redispatch down to that threshold fits within q).
        """
        q_arr = np.asarray(q, dtype=float)
        if self.step:
            # knots_phi is strictly decreasing over unique utilities
            idx = np.searchsorted(-self.knots_phi, -q_arr, side="left")
            us = np.append(self.knots_u, self.u_max)
            out = us[idx]
            out = np.where(q_arr >= self.total_demand, self.u_min, out)
        else:
            out = np.interp(q_arr, self.knots_phi[::-1], self.knots_u[::-1])
        return out if np.ndim(q) else float(out)

    def utility_above(self, t):
        """Aggregate utility rate of consumers with utility above ``t`` ($/slot).

        For a continuous curve this is the integral of u * density(u) over
        (t, u_max]; for a step curve the sum of utility * e_max over agents
        strictly above ``t``.
        """
        t_arr = np.asarray(t, dtype=float)
        if self.step:
            idx = np.searchsorted(self.knots_u, t_arr, side="right")
            out = self._step_utility_suffix[idx]
        else:
            ku = self.knots_u
            seg = np.clip(np.searchsorted(ku, t_arr, side="right") - 1, 0, len(ku) - 2)
            upper = ku[seg + 1]
            tt = np.clip(t_arr, ku[seg], upper)
            partial = 0.5 * self._segment_density[seg] * (upper**2 - tt**2)
            out = np.where(
                t_arr >= self.u_max,
                0.0,
                np.where(
                    t_arr <= self.u_min,
                    self._utility_suffix[0],
                    self._utility_suffix[seg + 1] + partial,
                ),
            )
        return out if np.ndim(t) else float(out)

    # -- precomputed pieces ----------------------------------------------

    @cached_property
    def _segment_density(self) -> np.ndarray:
        du = np.diff(self.knots_u)
        return -np.diff(self.knots_phi) / du

    @cached_property
    def _utility_suffix(self) -> np.ndarray:
        """Suffix integrals of u * density at each knot (last entry zero)."""
        ku = self.knots_u
        seg = 0.5 * self._segment_density * (ku[1:] ** 2 - ku[:-1] ** 2)
        out = np.zeros(len(ku))
        out[:-1] = np.cumsum(seg[::-1])[::-1]
        return out

    @cached_property
    def _step_utility_suffix(self) -> np.ndarray:
        contrib = self.knots_u * self.atom_energy
        out = np.zeros(len(contrib) + 1)
        out[:-1] = np.cumsum(contrib[::-1])[::-1]
        return out


def mean_field_from_spec(spec: PopulationSpec) -> MeanFieldDemand:
    """Exact aggregate demand curve of a uniform population.

    Independence of utility and e_max makes the curve linear:
    phi(u) = N * E[e_max] * (utility_max - u) / (utility_max - utility_min)
    inside the utility interval, clamped outside.
    """
    return MeanFieldDemand(
        knots_u=np.array([spec.utility_min, spec.utility_max]),
        knots_phi=np.array([spec.total_demand, 0.0]),
    )


def mean_field_from_agents(agents: list[Agent]) -> MeanFieldDemand:
    """Empirical step curve phi(u) = sum of e_max over agents with utility >= u."""
    if not agents:
        raise ValueError("cannot build a demand curve from an empty population")
    utilities = np.array([a.utility for a in agents])
    energies = np.array([a.e_max for a in agents])
    unique_u, inverse = np.unique(utilities, return_inverse=True)
    merged = np.bincount(inverse, weights=energies)
    tails = np.cumsum(merged[::-1])[::-1]
    return MeanFieldDemand(
        knots_u=unique_u, knots_phi=tails, step=True, atom_energy=merged
    )


def phi_inverse(mf: MeanFieldDemand, q) -> float:
    """Module-level alias for :meth:`MeanFieldDemand.phi_inverse`."""
    return mf.phi_inverse(q)


def dump_phi_csv(mf: MeanFieldDemand, path, points: int = 256) -> None:
    """Write the curve as a two-column CSV (utility, phi_kwh) for plotting."""
    grid = np.linspace(mf.u_min, mf.u_max, points)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("utility,phi_kwh\n")
        for u, p in zip(grid, mf.phi(grid)):
            handle.write(f"{float(u)!r},{float(p)!r}\n")
