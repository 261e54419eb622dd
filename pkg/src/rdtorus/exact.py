"""Exact verification on small state spaces: master equation, entropy, adjoints.

Configurations of an n^d-site torus are enumerated as integers with bit i
holding the occupancy of site i (row-major site order), so distributions
are vectors of length 2^(n^d) and the generator is a sparse matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .dynamics import ModelParams
from .lattice import TorusGeometry

__all__ = [
    "STATE_SPACE_CAP",
    "AbsoluteContinuityError",
    "DistributionVector",
    "GeneratorMatrix",
    "state_bits",
    "nu_rho_vector",
    "point_mass",
    "build_generator_matrix",
    "evolve_master_equation",
    "relative_entropy",
    "carre_du_champ",
    "carre_du_champ_vector",
    "adjoint_one",
    "walsh_coefficients",
    "yau_bound_check",
    "ibp_inequality_check",
    "entropy_inequality_check",
    "entropy_set_inequality_check",
]

STATE_SPACE_CAP = 2**20


class AbsoluteContinuityError(ValueError):
    """mu charges a state that nu does not."""


def _check_cap(g: TorusGeometry, cap: int) -> int:
    nstates = 1 << g.size
    if nstates > cap:
        raise ValueError(
            f"state space 2^{g.size} exceeds the cap {cap}; use a smaller torus"
        )
    return nstates


def state_bits(g: TorusGeometry, cap: int = STATE_SPACE_CAP) -> np.ndarray:
    """(2^N, N) float array of occupancy bits per enumerated state."""
    nstates = _check_cap(g, cap)
    states = np.arange(nstates, dtype=np.uint64)
    bits = np.empty((nstates, g.size), dtype=np.float64)
    for i in range(g.size):
        bits[:, i] = (states >> np.uint64(i)) & np.uint64(1)
    return bits


def nu_rho_vector(g: TorusGeometry, rho: float, cap: int = STATE_SPACE_CAP) -> np.ndarray:
    """Bernoulli product weights per state, computed from particle counts.

    Uses one power table indexed by particle number, so states with equal
    counts carry bit-identical weights (swap invariance holds exactly in
    floats).
    """
    nstates = _check_cap(g, cap)
    N = g.size
    pw = np.array([rho**k * (1.0 - rho) ** (N - k) for k in range(N + 1)])
    counts = np.zeros(nstates, dtype=np.int64)
    for i in range(N):
        counts += (np.arange(nstates, dtype=np.uint64) >> np.uint64(i)).astype(
            np.int64
        ) & 1
    return pw[counts]


def point_mass(g: TorusGeometry, state: int, cap: int = STATE_SPACE_CAP) -> np.ndarray:
    nstates = _check_cap(g, cap)
    v = np.zeros(nstates)
    v[state] = 1.0
    return v


@dataclass
class DistributionVector:
    """Probability vector over all configurations of a small torus."""

    geometry: TorusGeometry
    probs: np.ndarray
    mass_drift: float = 0.0  # accumulated |sum - 1| along an evolution

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or self.probs.shape[0] != 1 << self.geometry.size:
            raise ValueError("probability vector has wrong length")
        if np.any(self.probs < -1e-12):
            raise ValueError("negative probabilities")
        if abs(float(self.probs.sum()) - 1.0) > 1e-10:
            raise ValueError("probabilities must sum to 1 within 1e-10")


@dataclass
class GeneratorMatrix:
    """Sparse rate matrix of the chain over the enumerated configuration space."""

    params: ModelParams
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def geometry(self) -> TorusGeometry:
        return self.params.geometry

    def max_exit_rate(self) -> float:
        return float(-self.matrix.diagonal().min())


def _transition_lists(p: ModelParams, cap: int):
    """COO pieces for all off-diagonal transitions, vectorized over states."""
    g = p.geometry
    nstates = _check_cap(g, cap)
    states = np.arange(nstates, dtype=np.uint64)
    bit = [(states >> np.uint64(i)) & np.uint64(1) for i in range(g.size)]
    n2 = float(g.n) ** 2
    rows, cols, vals = [], [], []
    # exchanges: one generator term per (site, positive axis)
    for x in range(g.size):
        for j in range(g.d):
            y = g.neighbor(x, j, +1)
            discord = bit[x] != bit[y]
            src = states[discord]
            tgt = src ^ np.uint64((1 << x) | (1 << y))
            rows.append(src)
            cols.append(tgt)
            vals.append(np.full(src.shape, n2))
    # flips at rate c_x
    for x in range(g.size):
        pairs = np.zeros(nstates)
        for j in range(g.d):
            pairs += (
                bit[g.neighbor(x, j, -1)] * bit[g.neighbor(x, j, +1)]
            ).astype(np.float64)
        rate = np.where(bit[x] == 1, 1.0, 1.0 + p.lam * pairs)
        tgt = states ^ np.uint64(1 << x)
        rows.append(states)
        cols.append(tgt)
        vals.append(rate)
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(cols).astype(np.int64),
        np.concatenate(vals),
        nstates,
    )


def build_generator_matrix(p: ModelParams, cap: int = STATE_SPACE_CAP) -> GeneratorMatrix:
    """Sparse generator: off-diagonal transition rates, diagonal = -row sum."""
    rows, cols, vals, nstates = _transition_lists(p, cap)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(nstates, nstates)).tocsr()
    diag = np.asarray(mat.sum(axis=1)).ravel()
    mat = mat - sp.diags(diag)
    return GeneratorMatrix(params=p, matrix=mat.tocsr())


def evolve_master_equation(
    gen: GeneratorMatrix,
    mu0: DistributionVector,
    T: float,
    dt_control: float = 0.25,
    sample_times=None,
):
    """Forward equation d mu/dt = mu L by classical 4th-order stepping.

    The step is dt_control / (max exit rate); each inter-sample interval is
    subdivided to land exactly on the requested times.  Raises on step-size
    underflow and tracks probability-mass drift.
    """
    if T <= 0:
        raise ValueError("horizon must be positive")
    if sample_times is None:
        sample_times = np.linspace(0.0, T, 9)[1:]
    sample_times = np.asarray(sample_times, dtype=np.float64)
    if np.any(sample_times <= 0) or np.any(np.diff(sample_times) <= 0):
        raise ValueError("sample times must be positive and increasing")
    LT = gen.matrix.T.tocsr()
    h_target = dt_control / gen.max_exit_rate()
    if h_target < 1e-12 * max(T, 1.0):
        raise ValueError("step size underflow: the generator is too stiff here")
    mu = mu0.probs.astype(np.float64).copy()
    out = []
    t = 0.0
    drift = 0.0
    for s in sample_times:
        span = s - t
        steps = max(1, math.ceil(span / h_target))
        h = span / steps
        for _ in range(steps):
            k1 = LT @ mu
            k2 = LT @ (mu + 0.5 * h * k1)
            k3 = LT @ (mu + 0.5 * h * k2)
            k4 = LT @ (mu + h * k3)
            mu = mu + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = s
        drift = max(drift, abs(float(mu.sum()) - 1.0))
        if np.any(mu < -1e-10):
            raise ValueError(f"negative probability {mu.min():.3e} at t={t}")
        out.append(
            DistributionVector(
                geometry=gen.geometry, probs=np.clip(mu, 0.0, None), mass_drift=drift
            )
        )
    return sample_times, out


def relative_entropy(mu, nu) -> float:
    """H(mu | nu) = sum mu log(mu/nu), with 0 log 0 = 0."""
    mu = mu.probs if isinstance(mu, DistributionVector) else np.asarray(mu)
    nu = nu.probs if isinstance(nu, DistributionVector) else np.asarray(nu)
    bad = (nu <= 0) & (mu > 0)
    if np.any(bad):
        raise AbsoluteContinuityError("mu charges a nu-null state")
    mask = mu > 0
    return float(np.sum(mu[mask] * np.log(mu[mask] / nu[mask])))


def carre_du_champ(g_obs, gen: GeneratorMatrix, state: int) -> float:
    """Gamma(g)(state) = sum_y r(state, y) (g(y) - g(state))^2."""
    row = gen.matrix.getrow(state)
    total = 0.0
    for y, r in zip(row.indices, row.data):
        if y != state:
            total += r * (g_obs[y] - g_obs[state]) ** 2
    return float(total)


def carre_du_champ_vector(g_obs, gen: GeneratorMatrix) -> np.ndarray:
    """Gamma(g) at every state, via one sparse pass."""
    m = gen.matrix.tocoo()
    off = m.row != m.col
    rows, cols, vals = m.row[off], m.col[off], m.data[off]
    contrib = vals * (g_obs[cols] - g_obs[rows]) ** 2
    out = np.zeros(gen.matrix.shape[0])
    np.add.at(out, rows, contrib)
    return out


def adjoint_one(p: ModelParams, method: str, cap: int = STATE_SPACE_CAP) -> np.ndarray:
    """The adjoint generator (in L^2 of the product measure) applied to 1.

    method 'summation' evaluates sum_y [nu(y)/nu(x) r(y,x) - r(x,y)] state
    by state; 'transpose' computes (L^T nu) / nu from the sparse matrix;
    'polynomial' evaluates the closed-form centered-monomial expression
    2 lam sum etabar_{x-e_j} etabar_x + (lam/rho) sum etabar_{x-2e_j}
    etabar_{x-e_j} etabar_x (exact at the stationary root).
    """
    g = p.geometry
    if method == "summation":
        rows, cols, vals, nstates = _transition_lists(p, cap)
        nu = nu_rho_vector(g, p.rho, cap)
        out = np.zeros(nstates)
        # incoming mass-weighted rates minus outgoing rates
        np.add.at(out, cols, vals * nu[rows] / nu[cols])
        np.subtract.at(out, rows, vals)
        return out
    if method == "transpose":
        gen = build_generator_matrix(p, cap)
        nu = nu_rho_vector(g, p.rho, cap)
        return (gen.matrix.T @ nu) / nu
    if method == "polynomial":
        bits = state_bits(g, cap)
        eb = bits - p.rho
        out = np.zeros(bits.shape[0])
        for x in range(g.size):
            for j in range(g.d):
                x1 = g.neighbor(x, j, -1)
                x2 = g.neighbor(x1, j, -1)
                out += 2.0 * p.lam * eb[:, x1] * eb[:, x]
                out += (p.lam / p.rho) * eb[:, x2] * eb[:, x1] * eb[:, x]
        return out
    raise ValueError(f"unknown method {method!r}")


def walsh_coefficients(
    values: np.ndarray,
    g: TorusGeometry,
    rho: float,
    max_degree: int,
    normalized: bool = True,
    cap: int = STATE_SPACE_CAP,
) -> dict:
    """Expansion coefficients of a state function over centered monomials.

    Coefficient of the site set A is E_nu[values * etabar_A] divided by
    ||etabar_A||^2 (raw) or ||etabar_A|| (normalized basis).
    """
    bits = state_bits(g, cap)
    nu = nu_rho_vector(g, rho, cap)
    eb = bits - rho
    var = rho * (1.0 - rho)
    out = {(): float(np.dot(nu, values))}
    for deg in range(1, max_degree + 1):
        for sites in combinations(range(g.size), deg):
            mono = np.ones(bits.shape[0])
            for s in sites:
                mono = mono * eb[:, s]
            inner = float(np.dot(nu, values * mono))
            norm = var ** (deg / 2.0) if normalized else var**deg
            out[sites] = inner / norm
    return out


@dataclass
class YauReport:
    """Entropy production along an exact trajectory vs the adjoint bound."""

    times: np.ndarray
    entropy: np.ndarray  # H(mu_t | nu_rho) at the sampled times
    dH_dt: np.ndarray  # centered finite differences
    rhs_adjoint: np.ndarray  # integral of L*1 against mu_t
    rhs_carre: np.ndarray  # integral of Gamma(sqrt g_t) d nu
    tolerance: float
    entropy_initial: float
    rhs_at_zero: float

    @property
    def rhs(self) -> np.ndarray:
        return self.rhs_adjoint - self.rhs_carre

    @property
    def margins(self) -> np.ndarray:
        return self.rhs - self.dH_dt

    def holds(self) -> bool:
        scale = np.maximum(1.0, np.maximum(np.abs(self.dH_dt), np.abs(self.rhs)))
        return bool(np.all(self.dH_dt <= self.rhs + self.tolerance * scale))

    def sup_dH_dt(self) -> float:
        return float(self.dH_dt.max())


def yau_bound_check(
    p: ModelParams,
    mu0: DistributionVector,
    T: float,
    n_samples: int = 40,
    dt_control: float = 0.25,
    tolerance: float = 1e-8,
    cap: int = STATE_SPACE_CAP,
) -> YauReport:
    """Verify the entropy-production bound along the exact evolution.

    The reference measure is the fixed product measure, so the bound reads
    dH/dt <= int L*1 g_t d nu - int Gamma(sqrt g_t) d nu.  dH/dt is measured
    by five-point centered differences on the dense integration grid (the
    check stays independent of the identity being verified); sample times
    exclude a neighborhood of 0 where the finite-difference error is not
    controlled.
    """
    gen = build_generator_matrix(p, cap)
    nu = nu_rho_vector(p.geometry, p.rho, cap)
    lstar1 = adjoint_one(p, "transpose", cap)
    LT = gen.matrix.T.tocsr()
    h = dt_control / gen.max_exit_rate()
    steps = max(8, math.ceil(T / h))
    h = T / steps
    mu = mu0.probs.astype(np.float64).copy()
    H = np.empty(steps + 1)
    snapshots = {}

    # sample on the dense grid, log-spaced early then linear, away from ends
    lo, hi = 2, steps - 2
    t_lo = max(4, math.ceil(0.02 * steps))
    idx = set()
    for frac in np.geomspace(t_lo / steps, 0.25, n_samples // 2):
        idx.add(min(hi, max(lo, round(frac * steps))))
    for frac in np.linspace(0.25, 1.0, n_samples - n_samples // 2):
        idx.add(min(hi, max(lo, round(frac * steps))))
    sample_idx = np.array(sorted(idx))
    want = set(sample_idx.tolist())

    def entropy_of(v):
        mask = v > 0
        return float(np.sum(v[mask] * np.log(v[mask] / nu[mask])))

    H[0] = entropy_of(mu)
    rhs_at_zero = float(np.dot(lstar1, mu)) - _carre_sqrt_density(gen, nu, mu)
    for s in range(1, steps + 1):
        k1 = LT @ mu
        k2 = LT @ (mu + 0.5 * h * k1)
        k3 = LT @ (mu + 0.5 * h * k2)
        k4 = LT @ (mu + h * k3)
        mu = mu + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        H[s] = entropy_of(mu)
        if s in want:
            snapshots[s] = mu.copy()

    times = sample_idx * h
    dH = (-H[sample_idx + 2] + 8 * H[sample_idx + 1] - 8 * H[sample_idx - 1] + H[sample_idx - 2]) / (
        12.0 * h
    )
    rhs_adj = np.empty(len(sample_idx))
    rhs_car = np.empty(len(sample_idx))
    for i, s in enumerate(sample_idx):
        m = snapshots[s]
        rhs_adj[i] = float(np.dot(lstar1, m))
        rhs_car[i] = _carre_sqrt_density(gen, nu, m)
    return YauReport(
        times=times,
        entropy=H[sample_idx],
        dH_dt=dH,
        rhs_adjoint=rhs_adj,
        rhs_carre=rhs_car,
        tolerance=tolerance,
        entropy_initial=H[0],
        rhs_at_zero=rhs_at_zero,
    )


def _carre_sqrt_density(gen: GeneratorMatrix, nu: np.ndarray, mu: np.ndarray) -> float:
    """int Gamma(sqrt(mu/nu)) d nu by one sparse pass."""
    sq = np.sqrt(np.clip(mu, 0.0, None) / nu)
    m = gen.matrix.tocoo()
    off = m.row != m.col
    rows, cols, vals = m.row[off], m.col[off], m.data[off]
    return float(np.sum(nu[rows] * vals * (sq[cols] - sq[rows]) ** 2))


@dataclass
class InequalityReport:
    """Outcome of an exact inequality sweep."""

    lhs: float
    rhs: float
    label: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def holds(self, tol: float = 1e-12) -> bool:
        return self.lhs <= self.rhs + tol * max(1.0, abs(self.lhs), abs(self.rhs))


def ibp_inequality_check(
    g_density: np.ndarray,
    h_obs: np.ndarray,
    edge: tuple[int, int],
    a: float,
    p: ModelParams,
    cap: int = STATE_SPACE_CAP,
) -> InequalityReport:
    """Exchange integration-by-parts inequality, by exact summation.

    g_density: nonnegative with int g d nu = 1; h_obs must be invariant
    under the exchange at the given edge.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    geo = p.geometry
    x, y = edge
    nu = nu_rho_vector(geo, p.rho, cap)
    nstates = len(nu)
    states = np.arange(nstates, dtype=np.uint64)
    bx = ((states >> np.uint64(x)) & np.uint64(1)).astype(np.float64)
    by = ((states >> np.uint64(y)) & np.uint64(1)).astype(np.float64)
    swapped = np.where(bx != by, states ^ np.uint64((1 << x) | (1 << y)), states)
    swapped = swapped.astype(np.int64)
    if not np.allclose(h_obs[swapped], h_obs, rtol=0, atol=1e-12):
        raise ValueError("h must be invariant under the exchange at this edge")
    n2 = float(geo.n) ** 2
    lhs = float(np.sum(g_density * h_obs * (bx - by) * nu))
    sqrt_g = np.sqrt(np.clip(g_density, 0.0, None))
    dirichlet = float(np.sum((sqrt_g[swapped] - sqrt_g) ** 2 * nu))
    second = float(np.sum(h_obs**2 * g_density * nu))
    rhs = a * n2 * dirichlet + second / (a * n2)
    return InequalityReport(lhs=lhs, rhs=rhs, label=f"ibp edge={edge} a={a}")


def entropy_inequality_check(mu, nu, f_obs, gamma: float) -> InequalityReport:
    """int f d mu <= H(mu|nu)/gamma + log(int e^(gamma f) d nu)/gamma, exactly."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    mu = mu.probs if isinstance(mu, DistributionVector) else np.asarray(mu)
    nu = nu.probs if isinstance(nu, DistributionVector) else np.asarray(nu)
    lhs = float(np.dot(mu, f_obs))
    H = relative_entropy(mu, nu)
    log_mgf = float(np.log(np.dot(nu, np.exp(gamma * f_obs))))
    return InequalityReport(lhs=lhs, rhs=(H + log_mgf) / gamma, label="entropy-variational")


def entropy_set_inequality_check(mu, nu, A) -> InequalityReport:
    """mu(A) <= (H(mu|nu) + log 2) / log(1 + 1/nu(A)), exactly."""
    mu = mu.probs if isinstance(mu, DistributionVector) else np.asarray(mu)
    nu = nu.probs if isinstance(nu, DistributionVector) else np.asarray(nu)
    A = np.asarray(A)
    if A.size == 0:
        raise ValueError("the event must be nonempty")
    muA = float(mu[A].sum())
    nuA = float(nu[A].sum())
    H = relative_entropy(mu, nu)
    rhs = (H + math.log(2.0)) / math.log1p(1.0 / nuA)
    return InequalityReport(lhs=muA, rhs=rhs, label="entropy-set")
