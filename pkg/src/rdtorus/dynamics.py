"""Model rates, generator, stationary density, and the drift coefficient tables.

The process superposes symmetric exclusion at rate n^2 per nearest-neighbor
edge (only discordant edges move anything) with single-site birth-death at
rates c_x: death rate 1 for occupied sites, birth rate
1 + lam * sum_j eta_{x-e_j} eta_{x+e_j} for empty ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Configuration, TorusGeometry, flip_site, swap_sites

__all__ = [
    "ModelParams",
    "reaction_rate",
    "forcing",
    "stationary_density",
    "apply_generator",
    "DynkinExpansion",
    "dynkin_expansion",
    "Trajectory",
    "simulate_ctmc",
]


def forcing(m: float, lam: float, d: int) -> float:
    """Net creation rate under the product measure at density m."""
    return (1.0 - m) * (1.0 + lam * d * m * m) - m


def stationary_density(lam: float, d: int) -> float:
    """Unique root of the forcing term in (0,1), by bisection.

    F(0) = 1 > 0 > F(1) = -1 brackets the root; 60 halvings push the
    bracket width below float spacing, so the residual is a few ulps.
    """
    if lam < 0:
        raise ValueError("reaction strength must be nonnegative")
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if forcing(mid, lam, d) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ModelParams:
    """Reaction strength, geometry, and reference density."""

    lam: float
    geometry: TorusGeometry
    rho: float
    stationary_reference: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("reaction strength must be nonnegative")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("reference density must lie in (0,1)")
        if self.stationary_reference:
            resid = forcing(self.rho, self.lam, self.geometry.d)
            if abs(resid) > 1e-12:
                raise ValueError(
                    f"density {self.rho} is not a stationary root (F = {resid:.3e})"
                )

    @classmethod
    def at_stationary_density(cls, lam: float, geometry: TorusGeometry) -> "ModelParams":
        rho = stationary_density(lam, geometry.d)
        return cls(lam=lam, geometry=geometry, rho=rho, stationary_reference=True)


def reaction_rate(c: Configuration, x: int, p: ModelParams) -> float:
    """Birth-death rate at site x: 1 if occupied, 1 + lam * (pair count) if empty."""
    occ = c.occupancy
    if occ[x]:
        return 1.0
    g = c.geometry
    pairs = 0
    for j in range(g.d):
        pairs += int(occ[g.neighbor(x, j, -1)]) * int(occ[g.neighbor(x, j, +1)])
    return 1.0 + p.lam * pairs


def apply_generator(fn, c: Configuration, p: ModelParams) -> float:
    """Generator applied to an observable at a configuration.

    n^2 sum over positive-direction edges of the exchange difference, plus
    the rate-weighted flip differences.
    """
    g = c.geometry
    n2 = float(g.n) ** 2
    base = fn(c)
    total = 0.0
    for x in range(g.size):
        for j in range(g.d):
            y = g.neighbor(x, j, +1)
            if c.occupancy[x] != c.occupancy[y]:
                total += n2 * (fn(swap_sites(c, x, y)) - base)
        total += reaction_rate(c, x, p) * (fn(flip_site(c, x)) - base)
    return total


@dataclass
class DynkinExpansion:
    """Per-site coefficient tables expanding the generator applied to the field.

    Evaluating on a configuration must reproduce the generator applied to
    X(f) exactly (up to float roundoff); the five monomial groups are the
    discrete Laplacian acting through etabar_x, the remaining linear group,
    the two quadratic groups (adjacent pair, gap-2 pair), and the cubic
    group.  `constant` vanishes at the stationary root.
    """

    n: int
    rho: float
    laplacian: np.ndarray  # coeff of etabar_x (discrete Laplacian of f)
    linear: np.ndarray  # coeff of etabar_x (reaction part)
    pair_adjacent: np.ndarray  # coeff of etabar_{x-1} etabar_x
    pair_gap2: np.ndarray  # coeff of etabar_{x-2} etabar_x
    triple: np.ndarray  # coeff of etabar_{x-2} etabar_{x-1} etabar_x
    constant: float

    def evaluate(self, c: Configuration) -> float:
        eb = c.occupancy.astype(np.float64) - self.rho
        eb1 = np.roll(eb, 1)  # etabar_{x-1}
        eb2 = np.roll(eb, 2)  # etabar_{x-2}
        total = (
            np.dot(self.laplacian + self.linear, eb)
            + np.dot(self.pair_adjacent, eb1 * eb)
            + np.dot(self.pair_gap2, eb2 * eb)
            + np.dot(self.triple, eb2 * eb1 * eb)
            + self.constant
        )
        return total / np.sqrt(self.n)


def dynkin_expansion(f_values, p: ModelParams) -> DynkinExpansion:
    """Coefficient tables for the generator applied to the fluctuation field.

    f_values: the test function tabulated at the lattice points x/n
    (an array of length n), or an object exposing values_on(n).

    Dimension 1 only.  Derived by expanding the flip term
    c_x (1 - 2 eta_x) in centered variables; the identity is exact on the
    torus for any reference density (off the stationary root a constant
    F(rho) * sum f survives).
    """
    g = p.geometry
    if g.d != 1:
        raise ValueError("the field expansion is one-dimensional")
    n = g.n
    if hasattr(f_values, "values_on"):
        f = np.asarray(f_values.values_on(n), dtype=np.float64)
    else:
        f = np.asarray(f_values, dtype=np.float64)
    if f.shape != (n,):
        raise ValueError(f"need {n} tabulated values, got shape {f.shape}")
    lam, rho = p.lam, p.rho
    f_right = np.roll(f, -1)  # f_{x+1}
    f_left = np.roll(f, 1)  # f_{x-1}
    lap = n * n * (f_right + f_left - 2.0 * f)
    linear = -(2.0 + lam * rho * rho) * f + lam * rho * (1.0 - rho) * (f_right + f_left)
    pair_adjacent = -lam * rho * (f + f_left)
    pair_gap2 = lam * (1.0 - rho) * f_left
    triple = -lam * f_left
    constant = forcing(rho, lam, 1) * float(np.sum(f))
    return DynkinExpansion(
        n=n,
        rho=rho,
        laplacian=lap,
        linear=linear,
        pair_adjacent=pair_adjacent,
        pair_gap2=pair_gap2,
        triple=triple,
        constant=constant,
    )


EXCHANGE = 0
FLIP = 1


@dataclass
class Trajectory:
    """Event log of one chain realisation on [0, T].

    Exchange events carry the lower endpoint and axis of the swapped edge;
    flip events carry the site (axis -1).
    """

    initial: Configuration
    times: np.ndarray  # float64, strictly increasing
    kinds: np.ndarray  # int8: 0 exchange, 1 flip
    sites: np.ndarray  # int32
    axes: np.ndarray  # int8, -1 for flips
    horizon: float
    final: Configuration = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.times)

    def replay(self):
        """Yield (time, kind, site, axis, config_after) applying events in order."""
        c = self.initial.copy()
        g = c.geometry
        for t, k, s, a in zip(self.times, self.kinds, self.sites, self.axes):
            if k == EXCHANGE:
                y = g.neighbor(int(s), int(a), +1)
                c.occupancy[s], c.occupancy[y] = c.occupancy[y], c.occupancy[s]
            else:
                c.occupancy[s] ^= 1
            yield float(t), int(k), int(s), int(a), c

    def validate(self) -> None:
        """Check the Trajectory invariants: ordering, applicability, horizon."""
        if len(self.times) and not np.all(np.diff(self.times) > 0):
            raise ValueError("event times must be strictly increasing")
        if len(self.times) and (self.times[0] <= 0 or self.times[-1] > self.horizon):
            raise ValueError("event times must lie in (0, T]")
        c = self.initial.copy()
        g = c.geometry
        for t, k, s, a in zip(self.times, self.kinds, self.sites, self.axes):
            if k == EXCHANGE:
                y = g.neighbor(int(s), int(a), +1)
                if c.occupancy[s] == c.occupancy[y]:
                    raise ValueError(f"exchange across concordant pair at t={t}")
                c.occupancy[s], c.occupancy[y] = c.occupancy[y], c.occupancy[s]
            else:
                c.occupancy[s] ^= 1
        if self.final is not None and not np.array_equal(
            c.occupancy, self.final.occupancy
        ):
            raise ValueError("terminal configuration does not match the event log")


def simulate_ctmc(
    p: ModelParams,
    c0: Configuration,
    T: float,
    seed: int,
    replica: int = 0,
    sample_times=None,
) -> Trajectory:
    """Statistically exact trajectory of the chain, with full event log.

    Identical (seed, replica) keys give identical trajectories regardless
    of the engine in use.
    """
    from . import engine

    if T <= 0:
        raise ValueError("horizon must be positive")
    if c0.geometry != p.geometry:
        raise ValueError("configuration geometry does not match parameters")
    out = engine.run_chain_raw(
        eta0=c0.occupancy,
        params=p,
        sample_times=np.asarray(sample_times if sample_times is not None else [T]),
        seed_key=(seed, replica),
        record_events=True,
    )
    final = Configuration(p.geometry, out["eta_final"])
    return Trajectory(
        initial=c0.copy(),
        times=out["events_t"],
        kinds=out["events_kind"],
        sites=out["events_site"],
        axes=out["events_axis"],
        horizon=T,
        final=final,
    )
