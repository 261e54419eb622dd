"""Density fluctuation field: martingale decomposition, quadratic variation,
initial covariance, drift fitting, and time-averaged nonlinear statistics.

Everything here is one-dimensional (the field is defined on the ring).
Ensemble quantities aggregate over independent replicas keyed by
(seed, replica index), so results do not depend on worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from ._pyref import _Accum
from .dynamics import ModelParams, Trajectory
from .lattice import Configuration, OffsetSet

__all__ = [
    "TestFunction",
    "fourier_mode",
    "constant_function",
    "tabulated_function",
    "field_value",
    "FieldTrajectory",
    "martingale_decompose",
    "QVSeries",
    "predictable_qv",
    "EnsembleResult",
    "run_field_ensemble",
    "InitialCovarianceReport",
    "initial_covariance_test",
    "drift_candidates",
    "OUFit",
    "IllConditionedFit",
    "ou_fit",
    "BGReport",
    "bg_statistic",
    "bg_decay_report",
    "centered_reaction_terms",
    "centered_gradient_sq_terms",
    "exact_mean_reaction_rate",
    "TimeAverageReport",
    "time_average_local_check",
]


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function on the continuum circle [0,1).

    Fourier modes carry closed-form derivatives and inner products;
    tabulated functions carry value/derivative tables (cross-checked by
    finite differences at construction).
    """

    kind: str  # "cos", "sin", "const", "tabulated"
    k: int = 0
    values: tuple = ()
    deriv1: tuple = ()
    deriv2: tuple = ()

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "const":
            return np.ones_like(u)
        if self.kind == "cos":
            return math.sqrt(2.0) * np.cos(2 * np.pi * self.k * u)
        if self.kind == "sin":
            return math.sqrt(2.0) * np.sin(2 * np.pi * self.k * u)
        vals = np.asarray(self.values)
        idx = np.round(u * len(vals)).astype(int) % len(vals)
        return vals[idx]

    def values_on(self, n: int) -> np.ndarray:
        if self.kind == "tabulated":
            if len(self.values) != n:
                raise ValueError(
                    f"tabulated on {len(self.values)} points, lattice needs {n}"
                )
            return np.asarray(self.values, dtype=np.float64)
        return self(np.arange(n) / n)

    def l2_sq(self) -> float:
        if self.kind == "const":
            return 1.0
        if self.kind in ("cos", "sin"):
            return 1.0
        v = np.asarray(self.values)
        return float(np.mean(v * v))

    def grad_l2_sq(self) -> float:
        if self.kind == "const":
            return 0.0
        if self.kind in ("cos", "sin"):
            return (2 * np.pi * self.k) ** 2
        d = np.asarray(self.deriv1)
        return float(np.mean(d * d))

    def inner(self, other: "TestFunction") -> float:
        """Continuum inner product; closed form for the smooth kinds."""
        closed = {"const", "cos", "sin"}
        if self.kind in closed and other.kind in closed:
            if self.kind != other.kind:
                return 0.0
            if self.kind == "const":
                return 1.0
            return 1.0 if self.k == other.k else 0.0
        m = max(len(self.values) or 0, len(other.values) or 0, 1024)
        u = np.arange(m) / m
        return float(np.mean(self(u) * other(u)))

    def label(self) -> str:
        if self.kind == "const":
            return "const"
        if self.kind == "tabulated":
            return f"tab{len(self.values)}"
        return f"{self.kind}{self.k}"


def fourier_mode(k: int, kind: str = "cos") -> TestFunction:
    if k < 1:
        raise ValueError("mode index must be >= 1")
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be cos or sin")
    return TestFunction(kind=kind, k=k)


def constant_function() -> TestFunction:
    return TestFunction(kind="const")


def tabulated_function(values, deriv1, deriv2, fd_tol: float = 1e-6) -> TestFunction:
    """Tabulated test function; derivative tables are finite-difference checked."""
    v = np.asarray(values, dtype=np.float64)
    d1 = np.asarray(deriv1, dtype=np.float64)
    d2 = np.asarray(deriv2, dtype=np.float64)
    m = len(v)
    if d1.shape != (m,) or d2.shape != (m,):
        raise ValueError("value and derivative tables must have equal length")
    h = 1.0 / m
    fd1 = (np.roll(v, -1) - np.roll(v, 1)) / (2 * h)
    fd2 = (np.roll(v, -1) + np.roll(v, 1) - 2 * v) / (h * h)
    scale = max(1.0, float(np.max(np.abs(v))), float(np.max(np.abs(d1))))
    # central differences carry O(h^2) truncation controlled by the next
    # derivative; estimate it from the supplied tables
    d3_est = float(np.max(np.abs(np.roll(d2, -1) - np.roll(d2, 1)))) / (2 * h)
    d4_est = float(np.max(np.abs(np.roll(d2, -1) + np.roll(d2, 1) - 2 * d2))) / (h * h)
    if np.max(np.abs(fd1 - d1)) > fd_tol * scale + (h * h / 6.0) * d3_est * 1.5:
        raise ValueError("first-derivative table inconsistent with the values")
    if np.max(np.abs(fd2 - d2)) > fd_tol * scale / h + (h * h / 12.0) * d4_est * 1.5:
        raise ValueError("second-derivative table inconsistent with the values")
    return TestFunction(kind="tabulated", values=tuple(v), deriv1=tuple(d1), deriv2=tuple(d2))


def field_value(c: Configuration, f: TestFunction, rho: float) -> float:
    """Centered, n^(-1/2)-scaled field tested against f."""
    g = c.geometry
    if g.d != 1:
        raise ValueError("the fluctuation field is one-dimensional")
    vals = f.values_on(g.n)
    return float(np.dot(vals, c.occupancy.astype(np.float64) - rho)) / math.sqrt(g.n)


@dataclass
class FieldTrajectory:
    """Field samples and independently accumulated decomposition pieces.

    X is evaluated fresh from the configuration at each sample time; the
    martingale is the event-wise jump sum minus the drift integral computed
    through the direct transition sum; the compensator integral uses the
    coefficient-table expansion.  The pathwise identity
    X_t = X_0 + M_t + compensator_t is then a three-way consistency check,
    not a definition.
    """

    times: np.ndarray
    mode_labels: list
    X0: np.ndarray  # [M]
    X: np.ndarray  # [S, M]
    jump_sum: np.ndarray  # [S, M]
    drift_direct: np.ndarray  # [S, M]
    compensator: np.ndarray  # [S, M]
    qv_exclusion: np.ndarray  # [S, M]
    qv_reaction: np.ndarray  # [S, M]

    @property
    def martingale(self) -> np.ndarray:
        return self.jump_sum - self.drift_direct

    @property
    def qv_total(self) -> np.ndarray:
        return self.qv_exclusion + self.qv_reaction

    def decomposition_residual(self) -> np.ndarray:
        return self.X - self.X0[None, :] - self.martingale - self.compensator


def _mode_tables(params: ModelParams, fs) -> tuple[list, np.ndarray]:
    if isinstance(fs, TestFunction):
        fs = [fs]
    labels = [f.label() for f in fs]
    tables = np.vstack([f.values_on(params.geometry.n) for f in fs])
    return labels, tables


def _trajectory_field(out: dict, labels, eta0, field_spec, params) -> FieldTrajectory:
    n = params.geometry.n
    X0 = (field_spec["f"] @ (eta0.astype(np.float64) - params.rho)) / math.sqrt(n)
    return FieldTrajectory(
        times=out["t"],
        mode_labels=labels,
        X0=X0,
        X=out["X"],
        jump_sum=out["J"],
        drift_direct=out["Ddir"],
        compensator=out["Ddyn"],
        qv_exclusion=out["Qexc"],
        qv_reaction=out["Qreac"],
    )


def _replay(tr: Trajectory, params: ModelParams, sample_times, field_spec, poly_specs):
    """Replay an event log through the reference accumulators."""
    g = params.geometry
    st = np.asarray(sample_times, dtype=np.float64)
    eta = tr.initial.occupancy.copy()
    polys = poly_specs or []
    acc = _Accum(g.n, params.rho, params.lam, field_spec, polys)
    acc.refresh(eta)
    M, P = acc.M, acc.P
    S = len(st)
    out = {
        "t": st,
        "X": np.zeros((S, M)),
        "J": np.zeros((S, M)),
        "Ddir": np.zeros((S, M)),
        "Ddyn": np.zeros((S, M)),
        "Qexc": np.zeros((S, M)),
        "Qreac": np.zeros((S, M)),
        "P": np.zeros((S, P)),
    }
    inv_sqrt_n = 1.0 / math.sqrt(g.n)

    def snapshot(i):
        if M:
            eb = eta.astype(np.float64) - params.rho
            out["X"][i] = inv_sqrt_n * (field_spec["f"] @ eb)
            out["J"][i] = acc.J
            out["Ddir"][i] = acc.I_dir
            out["Ddyn"][i] = acc.I_dyn
            out["Qexc"][i] = acc.I_q1
            out["Qreac"][i] = acc.I_q2
        if P:
            out["P"][i] = acc.I_V
        acc.refresh(eta)

    t = 0.0
    si = 0
    events = zip(tr.times, tr.kinds, tr.sites, tr.axes)
    for te, kind, site, axis in events:
        while si < S and st[si] <= te:
            acc.advance(st[si] - t)
            t = float(st[si])
            snapshot(si)
            si += 1
        if si >= S:
            break
        acc.advance(te - t)
        t = float(te)
        if kind == 0:
            y = g.neighbor(int(site), int(axis), +1)
            acc.apply_site(eta, int(site))
            acc.apply_site(eta, y)
        else:
            acc.apply_site(eta, int(site))
    while si < S:
        acc.advance(st[si] - t)
        t = float(st[si])
        snapshot(si)
        si += 1
    return out


def martingale_decompose(
    tr: Trajectory, f, params: ModelParams, sample_times=None
) -> FieldTrajectory:
    """Decompose the field along a recorded trajectory.

    Exact piecewise-constant integrals between events; the martingale is
    recovered from the jump sum minus the direct drift integral.
    """
    if params.geometry.d != 1:
        raise ValueError("the fluctuation field is one-dimensional")
    labels, tables = _mode_tables(params, f)
    fs = engine.make_field_spec(params, tables)
    if sample_times is None:
        sample_times = np.linspace(tr.horizon / 8, tr.horizon, 8)
    out = _replay(tr, params, sample_times, fs, None)
    return _trajectory_field(out, labels, tr.initial.occupancy, fs, params)


@dataclass
class QVSeries:
    """Predictable quadratic variation split into its two integrands."""

    times: np.ndarray
    exclusion: np.ndarray  # [S, M]
    reaction: np.ndarray  # [S, M]

    @property
    def total(self) -> np.ndarray:
        return self.exclusion + self.reaction


def predictable_qv(tr: Trajectory, f, params: ModelParams, sample_times=None) -> QVSeries:
    """Integrated QV components along a recorded trajectory."""
    if sample_times is None:
        sample_times = np.linspace(tr.horizon / 8, tr.horizon, 8)
    labels, tables = _mode_tables(params, f)
    fs = engine.make_field_spec(params, tables)
    out = _replay(tr, params, sample_times, fs, None)
    return QVSeries(times=out["t"], exclusion=out["Qexc"], reaction=out["Qreac"])


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    """Stacked per-replica outputs, ordered by replica index."""

    params: ModelParams
    times: np.ndarray
    mode_labels: list
    X0: np.ndarray  # [R, M]
    X: np.ndarray  # [R, S, M]
    jump_sum: np.ndarray
    drift_direct: np.ndarray
    compensator: np.ndarray
    qv_exclusion: np.ndarray
    qv_reaction: np.ndarray
    poly: np.ndarray  # [R, S, P]
    particles: np.ndarray  # [R, S]
    eta_samples: np.ndarray | None = None  # [R, S, N] when requested

    @property
    def martingale(self) -> np.ndarray:
        return self.jump_sum - self.drift_direct

    @property
    def qv_total(self) -> np.ndarray:
        return self.qv_exclusion + self.qv_reaction

    def decomposition_residual(self) -> np.ndarray:
        return (
            self.X - self.X0[:, None, :] - self.martingale - self.compensator
        )


_WORKER_STATE: dict = {}


def _init_ensemble_worker(state):
    global _WORKER_STATE
    _WORKER_STATE = state


def _ensemble_worker(replica):
    st = _WORKER_STATE
    p: ModelParams = st["params"]
    eta0 = st.get("eta0")
    if eta0 is None:
        eta0 = engine.sample_product_configuration(p.geometry, p.rho, st["seed"], replica)
    out = engine.run_chain_raw(
        eta0,
        p,
        st["sample_times"],
        (st["seed"], replica),
        field_spec=st["field_spec"],
        poly_specs=st["poly_specs"],
        field_mode=st["field_mode"],
        want_eta_samples=st["want_eta_samples"],
    )
    fs = st["field_spec"]
    if fs is not None:
        X0 = (fs["f"] @ (eta0.astype(np.float64) - p.rho)) / math.sqrt(p.geometry.n)
    else:
        X0 = np.zeros(0)
    pieces = [
        X0,
        out["X"],
        out["J"],
        out["Ddir"],
        out["Ddyn"],
        out["Qexc"],
        out["Qreac"],
        out["P"],
        out["particles"],
    ]
    if st["want_eta_samples"]:
        pieces.append(out["eta_samples"])
    return pieces


def run_field_ensemble(
    params: ModelParams,
    modes,
    sample_times,
    replicas: int,
    seed: int,
    start=None,
    poly_specs=None,
    field_mode: str = "full",
    want_eta_samples: bool = False,
    workers: int | None = None,
) -> EnsembleResult:
    """Independent replicas of the chain with field/polynomial accumulators.

    start: None samples each replica's initial configuration from the
    product measure; a Configuration fixes a deterministic start.
    """
    if modes:
        labels, tables = _mode_tables(params, modes)
        fs = engine.make_field_spec(params, tables)
    else:
        labels, fs = [], None
    state = {
        "params": params,
        "sample_times": np.asarray(sample_times, dtype=np.float64),
        "seed": int(seed),
        "field_spec": fs,
        "poly_specs": poly_specs,
        "field_mode": field_mode,
        "want_eta_samples": want_eta_samples,
        "eta0": None if start is None else np.asarray(start.occupancy, dtype=np.uint8),
    }
    results = engine.parallel_map(
        _ensemble_worker,
        range(replicas),
        workers=workers,
        initializer=_init_ensemble_worker,
        initargs=(state,),
    )
    stacked = [np.stack([r[i] for r in results]) for i in range(9)]
    eta_s = np.stack([r[9] for r in results]) if want_eta_samples else None
    return EnsembleResult(
        params=params,
        times=state["sample_times"],
        mode_labels=labels,
        X0=stacked[0],
        X=stacked[1],
        jump_sum=stacked[2],
        drift_direct=stacked[3],
        compensator=stacked[4],
        qv_exclusion=stacked[5],
        qv_reaction=stacked[6],
        poly=stacked[7],
        particles=stacked[8],
        eta_samples=eta_s,
    )


# ---------------------------------------------------------------------------
# initial covariance


@dataclass
class InitialCovarianceReport:
    empirical: float
    se: float
    target_continuum: float
    target_finite_n: float

    def z_continuum(self) -> float:
        return (self.empirical - self.target_continuum) / self.se

    def z_finite_n(self) -> float:
        return (self.empirical - self.target_finite_n) / self.se


def initial_covariance_test(
    f: TestFunction,
    g_fn: TestFunction,
    rho: float,
    samples: int,
    n: int,
    seed: int,
    chunk: int = 20_000,
) -> InitialCovarianceReport:
    """Empirical Cov(X_0(f), X_0(g)) under product sampling vs both targets.

    The finite-n target is rho(1-rho) (1/n) sum f g at the lattice points;
    the continuum target replaces the Riemann sum with the integral.
    """
    fv = f.values_on(n)
    gv = g_fn.values_on(n)
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    prods = np.empty(samples)
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        eta = (rng.random((b, n)) < rho).astype(np.float64) - rho
        xf = eta @ fv / math.sqrt(n)
        xg = eta @ gv / math.sqrt(n)
        prods[done : done + b] = xf * xg
        done += b
    emp = float(prods.mean())
    se = float(prods.std(ddof=1) / math.sqrt(samples))
    var = rho * (1.0 - rho)
    return InitialCovarianceReport(
        empirical=emp,
        se=se,
        target_continuum=var * f.inner(g_fn),
        target_finite_n=var * float(np.dot(fv, gv)) / n,
    )


# ---------------------------------------------------------------------------
# OU drift fitting


def drift_candidates(k: int, lam: float, rho: float) -> dict:
    """The three drift coefficients stated for the limit equation.

    They disagree for lam > 0; all three are reported and none is
    privileged.  'linearized-forcing' equals 4 pi^2 k^2 - F'(rho).
    """
    base = (2 * np.pi * k) ** 2
    return {
        "limit-equation": base + 1.0 / (1.0 - rho) - lam * rho**2 / (1.0 + lam * rho**2),
        "martingale-problem": base + 1.0 + lam * (1.0 - rho),
        "linearized-forcing": base + 2.0 + lam * rho**2 - 2.0 * lam * rho * (1.0 - rho),
    }


class IllConditionedFit(ValueError):
    """Lag grid too short or degenerate for a drift fit."""


@dataclass
class OUFit:
    mode: int
    theta_hat: float
    se: float
    lag_times: np.ndarray
    candidates: dict
    block_thetas: np.ndarray

    def deviations(self) -> dict:
        return {k: self.theta_hat - v for k, v in self.candidates.items()}


def ou_fit(
    Y: np.ndarray,
    dt: float,
    k: int,
    lam: float,
    rho: float,
    n_blocks: int = 20,
    lag_window: tuple[float, float] = (0.05, 0.5),
    n_lags: int = 8,
    burn_frac: float = 0.1,
) -> OUFit:
    """Drift of a stationary scalar series by lag-autocovariance regression.

    Y: [replicas, samples] field values on a uniform time grid of spacing
    dt.  The lag grid spans lag_window / theta_guess with theta_guess the
    'limit-equation' candidate; log-autocovariance is regressed on the lag
    per replica block, and the block spread gives the standard error.
    """
    Y = np.asarray(Y, dtype=np.float64)
    R, S = Y.shape
    theta_guess = drift_candidates(k, lam, rho)["limit-equation"]
    lags_t = np.linspace(lag_window[0] / theta_guess, lag_window[1] / theta_guess, n_lags)
    lag_idx = np.unique(np.maximum(1, np.round(lags_t / dt).astype(int)))
    if len(lag_idx) < 4:
        raise IllConditionedFit(
            f"only {len(lag_idx)} usable lags at spacing {dt}; sample finer or longer"
        )
    burn = int(burn_frac * S)
    if S - burn - int(lag_idx.max()) < 8:
        raise IllConditionedFit("series too short for the requested lag window")
    n_blocks = min(n_blocks, R)
    bounds = np.linspace(0, R, n_blocks + 1).astype(int)
    thetas = np.empty(n_blocks)
    for b in range(n_blocks):
        blk = Y[bounds[b] : bounds[b + 1], burn:]
        cov = np.empty(len(lag_idx))
        for i, L in enumerate(lag_idx):
            cov[i] = float(np.mean(blk[:, :-L] * blk[:, L:]))
        if np.any(cov <= 0):
            raise IllConditionedFit("autocovariance crossed zero inside the lag window")
        x = lag_idx * dt
        slope = np.polyfit(x, np.log(cov), 1)[0]
        thetas[b] = -slope
    theta_hat = float(thetas.mean())
    se = float(thetas.std(ddof=1) / math.sqrt(n_blocks))
    return OUFit(
        mode=k,
        theta_hat=theta_hat,
        se=se,
        lag_times=lag_idx * dt,
        candidates=drift_candidates(k, lam, rho),
        block_thetas=thetas,
    )


# ---------------------------------------------------------------------------
# time-averaged nonlinear statistics


@dataclass
class BGReport:
    n: int
    t: float
    replicas: int
    mean: float
    second_moment: float
    se_second_moment: float


def bg_statistic(
    params: ModelParams,
    phi: TestFunction,
    A0: OffsetSet,
    T: float,
    replicas: int,
    seed: int,
    workers: int | None = None,
) -> BGReport:
    """Second moment of the time-integrated two-point statistic.

    The integrand is sum_x phi(x/n) etabar_{A0+x} etabar_x; the statistic
    is its n^(-d/2)-scaled time integral over [0, T], one value per replica.
    """
    if not A0.strictly_negative():
        raise ValueError("offsets must have strictly negative coordinates")
    g = params.geometry
    offsets = tuple(a[0] for a in A0.offsets) + (0,)
    spec = engine.make_poly_spec(phi.values_on(g.n), [(1.0, offsets)])
    ens = run_field_ensemble(
        params,
        modes=[],
        sample_times=[T],
        replicas=replicas,
        seed=seed,
        poly_specs=[spec],
        workers=workers,
    )
    stat = ens.poly[:, -1, 0] / math.sqrt(g.n)
    m2 = stat**2
    return BGReport(
        n=g.n,
        t=T,
        replicas=replicas,
        mean=float(stat.mean()),
        second_moment=float(m2.mean()),
        se_second_moment=float(m2.std(ddof=1) / math.sqrt(replicas)),
    )


def bg_decay_report(
    n_grid,
    lam: float,
    phi_mode: int,
    T: float,
    replicas: int,
    seed: int,
    A0=None,
    workers: int | None = None,
) -> list[BGReport]:
    """bg_statistic across a grid of lattice sizes (decay experiment)."""
    from .lattice import build_torus

    A0 = A0 if A0 is not None else OffsetSet.make([-1])
    phi = fourier_mode(phi_mode)
    out = []
    for n in n_grid:
        p = ModelParams.at_stationary_density(lam, build_torus(1, n))
        out.append(bg_statistic(p, phi, A0, T, replicas, seed + n, workers=workers))
    return out


def exact_mean_reaction_rate(lam: float, rho: float) -> float:
    """E_nu[c_x] = 1 + lam rho^2 (1-rho); equals 2 rho at the stationary root."""
    return 1.0 + lam * rho * rho * (1.0 - rho)


def centered_reaction_terms(lam: float, rho: float) -> list:
    """c_x - E[c_x] expanded in centered monomials (d = 1)."""
    if lam == 0.0:
        return []
    return [
        (lam * (1.0 - rho), (-1, 1)),
        (lam * rho * (1.0 - rho), (-1,)),
        (lam * rho * (1.0 - rho), (1,)),
        (-lam * rho * rho, (0,)),
        (-lam * rho, (-1, 0)),
        (-lam * rho, (0, 1)),
        (-lam, (-1, 0, 1)),
    ]


def centered_gradient_sq_terms(rho: float) -> list:
    """(eta_{x+1} - eta_x)^2 minus its exact mean 2 rho(1-rho), centered."""
    return [
        (1.0 - 2.0 * rho, (0,)),
        (1.0 - 2.0 * rho, (1,)),
        (-2.0, (0, 1)),
    ]


@dataclass
class TimeAverageReport:
    n_grid: np.ndarray
    mean_abs: np.ndarray
    se: np.ndarray
    slope: float
    slope_se: float


def time_average_local_check(
    n_grid,
    lam: float,
    T: float,
    replicas: int,
    seed: int,
    psi: str = "reaction",
    G=None,
    workers: int | None = None,
) -> TimeAverageReport:
    """Scaling of E| int (1/n) sum_x G_x psi_x ds | across lattice sizes.

    psi 'reaction' centers the birth-death rate by its exact product-measure
    mean; 'gradient_sq' centers the squared occupation gradient.  The
    report carries the log-log slope (expected near -1/2).
    """
    from .lattice import build_torus

    means = []
    ses = []
    n_arr = np.array(sorted(n_grid))
    for n in n_arr:
        p = ModelParams.at_stationary_density(lam, build_torus(1, n))
        if psi == "reaction":
            terms = centered_reaction_terms(p.lam, p.rho)
        elif psi == "gradient_sq":
            terms = centered_gradient_sq_terms(p.rho)
        else:
            terms = psi
        weights = np.full(n, 1.0) if G is None else np.asarray(G(n) if callable(G) else G)
        if not terms:
            means.append(0.0)
            ses.append(0.0)
            continue
        spec = engine.make_poly_spec(weights / n, terms)
        ens = run_field_ensemble(
            params=p,
            modes=[],
            sample_times=[T],
            replicas=replicas,
            seed=seed + int(n),
            poly_specs=[spec],
            workers=workers,
        )
        z = np.abs(ens.poly[:, -1, 0])
        means.append(float(z.mean()))
        ses.append(float(z.std(ddof=1) / math.sqrt(replicas)))
    means = np.array(means)
    ses = np.array(ses)
    if np.all(means > 0):
        logn, logm = np.log(n_arr), np.log(means)
        coef, cov = np.polyfit(logn, logm, 1, cov=True)
        slope, slope_se = float(coef[0]), float(np.sqrt(cov[0, 0]))
    else:
        slope, slope_se = 0.0, 0.0
    return TimeAverageReport(
        n_grid=n_arr, mean_abs=means, se=ses, slope=slope, slope_se=slope_se
    )
