"""Numerically verified concentration inequalities on finite-support witnesses.

Every check here evaluates both sides of an inequality by exact finite
summation or enumeration; nothing in this module samples.  Witnesses are
finite-support discrete variables so moment generating functions, tails,
and superlevel-set measures are all finite sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import TorusGeometry, sparse_partition

__all__ = [
    "SubgaussianWitness",
    "centered_bernoulli",
    "scaled_bernoulli_sum",
    "default_theta_grid",
    "SweepReport",
    "subgaussian_verify",
    "minimal_subgaussian_sigma2",
    "chisq_moment_verify",
    "bounded_differences_verify",
    "tail_to_moment_verify",
    "tail_to_moment_constant",
    "holder_grouped_check",
]


@dataclass
class SweepReport:
    """Both sides of an inequality over a sweep of evaluation points."""

    label: str
    points: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        return self.rhs - self.lhs

    def worst_margin(self) -> float:
        return float(self.margins.min()) if len(self.margins) else math.inf

    def holds(self, tol: float = 1e-12) -> bool:
        scale = np.maximum(1.0, np.maximum(np.abs(self.lhs), np.abs(self.rhs)))
        return bool(np.all(self.lhs <= self.rhs + tol * scale))

    def verdict(self, tol: float = 1e-12) -> dict:
        return {
            "label": self.label,
            "points": len(self.points),
            "worst_margin": self.worst_margin(),
            "holds": self.holds(tol),
        }


@dataclass(frozen=True)
class SubgaussianWitness:
    """Finite-support variable with a claimed subgaussian parameter."""

    values: tuple
    probs: tuple
    sigma2: float

    def __post_init__(self):
        p = np.asarray(self.probs)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        if len(self.values) != len(self.probs):
            raise ValueError("values and probabilities must align")
        if self.sigma2 <= 0:
            raise ValueError("subgaussian parameter must be positive")

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def mgf(self, theta) -> np.ndarray:
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return np.exp(np.outer(theta, v)) @ p

    def tail_two_sided(self, t: float) -> float:
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        return float(p[np.abs(v) > t].sum())


def centered_bernoulli(rho: float, sigma2: float = 0.25) -> SubgaussianWitness:
    """Bernoulli(rho) minus its mean; Hoeffding parameter (b-a)^2/4 = 1/4."""
    return SubgaussianWitness(
        values=(1.0 - rho, -rho), probs=(rho, 1.0 - rho), sigma2=sigma2
    )


def scaled_bernoulli_sum(m: int, sigma2: float = 0.25) -> SubgaussianWitness:
    """Sum of m independent centered Bernoulli(1/2) variables scaled by m^(-1/2).

    Exact binomial support; the subgaussian parameter of the sum is
    m * (1/4) / m = 1/4.
    """
    ks = np.arange(m + 1)
    probs = np.array([math.comb(m, int(k)) for k in ks], dtype=np.float64) / 2.0**m
    values = (ks - m / 2.0) / math.sqrt(m)
    return SubgaussianWitness(values=tuple(values), probs=tuple(probs), sigma2=sigma2)


def default_theta_grid(sigma: float, span: float = 20.0, points: int = 25) -> np.ndarray:
    """Symmetric log-spaced grid reaching +-span/sigma."""
    mags = np.geomspace(1e-2, span / sigma, points)
    return np.concatenate([-mags[::-1], [0.0], mags])


def subgaussian_verify(w: SubgaussianWitness, theta_grid=None) -> list[SweepReport]:
    """mgf domination and the two-sided tail bound, by exact summation."""
    if abs(w.mean()) > 1e-12:
        raise ValueError(f"witness is not centered (mean {w.mean():.3e})")
    if theta_grid is None:
        theta_grid = default_theta_grid(math.sqrt(w.sigma2))
    theta_grid = np.asarray(theta_grid, dtype=np.float64)
    mgf = w.mgf(theta_grid)
    bound = np.exp(0.5 * theta_grid**2 * w.sigma2)
    mgf_rep = SweepReport("mgf <= exp(theta^2 sigma^2/2)", theta_grid, mgf, bound)

    v = np.abs(np.asarray(w.values))
    ts = np.unique(np.concatenate([v, 0.5 * (v + np.roll(v, 1)), np.linspace(0, v.max(), 17)]))
    ts = ts[ts >= 0]
    tails = np.array([w.tail_two_sided(float(t)) for t in ts])
    tbound = 2.0 * np.exp(-(ts**2) / (2.0 * w.sigma2))
    tail_rep = SweepReport("P(|X|>t) <= 2 exp(-t^2/2 sigma^2)", ts, tails, tbound)
    return [mgf_rep, tail_rep]


def minimal_subgaussian_sigma2(
    w: SubgaussianWitness, theta_grid=None, tol: float = 1e-12
) -> float:
    """Smallest parameter passing the mgf check on the grid, by bisection."""
    if theta_grid is None:
        theta_grid = default_theta_grid(math.sqrt(w.sigma2))
    theta_grid = np.asarray(theta_grid, dtype=np.float64)
    mgf = w.mgf(theta_grid)

    def passes(s2):
        return bool(np.all(mgf <= np.exp(0.5 * theta_grid**2 * s2) * (1 + 1e-15)))

    lo, hi = 0.0, max(w.sigma2, 1.0)
    while not passes(hi):
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


def chisq_moment_verify(w: SubgaussianWitness, c: float) -> SweepReport:
    """E[exp(c X^2)] <= exp(8 c sigma^2) for c in (0, 1/(4 sigma^2)]."""
    if not (0.0 < c <= 1.0 / (4.0 * w.sigma2)):
        raise ValueError(
            f"c must lie in (0, 1/(4 sigma^2)] = (0, {1.0/(4*w.sigma2):.6g}], got {c}"
        )
    if abs(w.mean()) > 1e-12:
        raise ValueError("witness is not centered")
    v = np.asarray(w.values)
    p = np.asarray(w.probs)
    lhs = float(np.dot(p, np.exp(c * v * v)))
    rhs = math.exp(8.0 * c * w.sigma2)
    return SweepReport(
        "E[exp(c X^2)] <= exp(8 c sigma^2)", np.array([c]), np.array([lhs]), np.array([rhs])
    )


def bounded_differences_verify(
    fn: np.ndarray, g: TorusGeometry, rho: float, deltas
) -> SweepReport:
    """McDiarmid bound with exactly computed per-site oscillation constants.

    fn: vector indexed by the enumerated configurations of the torus
    (2^(n^d) entries).  Checks nu(fn - E fn > delta) <= exp(-2 delta^2 /
    sum_x c_x^2) at each delta; both sides are exact sums.
    """
    from .exact import nu_rho_vector

    N = g.size
    if N > 16:
        raise ValueError("oscillation scan is exact-enumeration only (n^d <= 16)")
    fn = np.asarray(fn, dtype=np.float64)
    nstates = 1 << N
    if fn.shape != (nstates,):
        raise ValueError("fn must be tabulated on all configurations")
    states = np.arange(nstates)
    c = np.empty(N)
    for x in range(N):
        flipped = states ^ (1 << x)
        c[x] = np.max(np.abs(fn[flipped] - fn))
    nu = nu_rho_vector(g, rho)
    mean = float(np.dot(nu, fn))
    csum = float(np.dot(c, c))
    deltas = np.asarray(deltas, dtype=np.float64)
    lhs = np.array([float(nu[fn - mean > d].sum()) for d in deltas])
    rhs = (
        np.exp(-2.0 * deltas**2 / csum) if csum > 0 else np.where(deltas > 0, 0.0, 1.0)
    )
    return SweepReport("nu(f - Ef > d) <= exp(-2 d^2/sum c^2)", deltas, lhs, rhs)


def tail_to_moment_constant(theta: float) -> float:
    """The explicit constant 1 + theta/(2 - theta) from the epsilon = C^(1/2) choice."""
    if not (0.0 < theta < 2.0):
        raise ValueError("theta must lie in (0, 2)")
    return 1.0 + theta / (2.0 - theta)


def tail_to_moment_verify(C: float, theta: float, witness="uniform") -> SweepReport:
    """Moment bound E|X|^theta <= (1 + theta/(2-theta)) C^(theta/2).

    Witnesses have closed-form moments and exactly verifiable tails:
    'zero' is X = 0; 'uniform' is uniform on [-1, 1], which satisfies
    P(|X| > d) <= C/d^2 whenever C >= 4/27 (the exact supremum of
    d^2 P(|X| > d)).
    """
    const = tail_to_moment_constant(theta)
    if witness == "zero":
        moment = 0.0
    elif witness == "uniform":
        sup = 4.0 / 27.0  # max over d of d^2 (1 - d)
        if C < sup:
            raise ValueError(f"uniform witness needs C >= {sup:.6g} for the tail bound")
        moment = 1.0 / (1.0 + theta)
    else:
        raise ValueError(f"unknown witness {witness!r}")
    rhs = const * C ** (theta / 2.0)
    return SweepReport(
        f"E|X|^theta <= C(theta) C^(theta/2) [{witness}]",
        np.array([theta]),
        np.array([moment]),
        np.array([rhs]),
    )


def holder_grouped_check(
    g: TorusGeometry, k: int, rho: float, gamma: float
) -> SweepReport:
    """Grouped exponential-moment bound through a k-sparse partition.

    With xi_x the centered occupation variables, compares
    (1/gamma) log E exp(gamma sum_x xi_x^2) against the Hoelder regrouping
    (1/(gamma |I|)) sum_i log E exp(gamma |I| sum_{x in B_i} xi_x^2),
    both as exact sums over all configurations.
    """
    from .exact import nu_rho_vector, state_bits

    if gamma <= 0:
        raise ValueError("gamma must be positive")
    part = sparse_partition(g, k)
    nu = nu_rho_vector(g, rho)
    xi2 = (state_bits(g) - rho) ** 2
    total = xi2.sum(axis=1)
    nclasses = part.class_count()
    lhs = math.log(float(np.dot(nu, np.exp(gamma * total)))) / gamma
    rhs = 0.0
    for cls in part.classes:
        idx = sorted(cls)
        s = xi2[:, idx].sum(axis=1)
        rhs += math.log(float(np.dot(nu, np.exp(gamma * nclasses * s))))
    rhs /= gamma * nclasses
    return SweepReport(
        f"grouped Hoelder (k={k}, classes={nclasses})",
        np.array([gamma]),
        np.array([lhs]),
        np.array([rhs]),
    )
