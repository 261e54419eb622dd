"""Tests for the fluctuation-field machinery."""

import math

import numpy as np
import pytest

from rdtorus import engine, fluct
from rdtorus.dynamics import ModelParams, reaction_rate, simulate_ctmc
from rdtorus.fluct import (
    IllConditionedFit,
    bg_statistic,
    centered_gradient_sq_terms,
    centered_reaction_terms,
    constant_function,
    drift_candidates,
    exact_mean_reaction_rate,
    field_value,
    fourier_mode,
    initial_covariance_test,
    martingale_decompose,
    ou_fit,
    predictable_qv,
    run_field_ensemble,
    tabulated_function,
    time_average_local_check,
)
from rdtorus.lattice import Configuration, OffsetSet, build_torus


class TestTestFunction:
    def test_mode_values_and_norms(self):
        f = fourier_mode(1)
        assert f.l2_sq() == pytest.approx(1.0)
        assert f.grad_l2_sq() == pytest.approx(4 * np.pi**2)
        n = 16
        vals = f.values_on(n)
        # lattice Riemann sum of f^2 is exactly 1 for 2k < n
        assert np.dot(vals, vals) / n == pytest.approx(1.0, abs=1e-12)

    def test_inner_products(self):
        assert fourier_mode(1).inner(fourier_mode(2)) == 0.0
        assert fourier_mode(1).inner(fourier_mode(1)) == 1.0
        assert fourier_mode(1, "sin").inner(fourier_mode(1)) == 0.0
        assert constant_function().inner(fourier_mode(3)) == 0.0

    def test_tabulated_consistency_check(self):
        m = 256
        u = np.arange(m) / m
        v = np.sin(2 * np.pi * u)
        d1 = 2 * np.pi * np.cos(2 * np.pi * u)
        d2 = -((2 * np.pi) ** 2) * np.sin(2 * np.pi * u)
        f = tabulated_function(v, d1, d2)
        assert f.values_on(m).shape == (m,)
        with pytest.raises(ValueError):
            tabulated_function(v, np.zeros(m), d2)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            fourier_mode(0)


class TestFieldValue:
    def test_constant_function_counts_particles(self):
        n = 16
        g = build_torus(1, n)
        rho = 0.3
        c = Configuration(g, [1] * 5 + [0] * 11)
        expect = (5 - rho * n) / math.sqrt(n)
        assert field_value(c, constant_function(), rho) == pytest.approx(expect)

    def test_full_configuration_mode_k(self):
        # eta = 1: the mode sums to zero on the lattice, so X = 0 exactly
        n = 32
        g = build_torus(1, n)
        c = Configuration.full(g)
        assert abs(field_value(c, fourier_mode(1), 0.4)) < 1e-12

    def test_exact_variance_under_product_sampling(self):
        n, rho = 24, 0.57
        g = build_torus(1, n)
        f = fourier_mode(2)
        vals = f.values_on(n)
        exact_var = rho * (1 - rho) * float(np.dot(vals, vals)) / n
        rng = np.random.default_rng(5)
        xs = np.array(
            [
                field_value(Configuration(g, (rng.random(n) < rho).astype(int)), f, rho)
                for _ in range(4000)
            ]
        )
        assert xs.mean() == pytest.approx(0.0, abs=4 * xs.std() / math.sqrt(len(xs)))
        assert xs.var() == pytest.approx(exact_var, rel=0.15)

    def test_rejects_2d(self):
        g = build_torus(2, 4)
        with pytest.raises(ValueError):
            field_value(Configuration.empty(g), fourier_mode(1), 0.5)


class TestMartingaleDecompose:
    def test_empty_trajectory(self):
        # no events: the jump sum vanishes and the drift integral is the
        # exact piecewise-constant value t * L X(f)(eta_0); the martingale
        # then equals minus that integral (the decomposition forces it,
        # since X_t = X_0 on an event-free stretch)
        from rdtorus.dynamics import Trajectory, apply_generator

        n = 16
        g = build_torus(1, n)
        p = ModelParams.at_stationary_density(1.0, g)
        eta0 = engine.sample_product_configuration(g, p.rho, 3, 0)
        c0 = Configuration(g, eta0)
        tr = Trajectory(
            initial=c0,
            times=np.array([]),
            kinds=np.array([], dtype=np.int8),
            sites=np.array([], dtype=np.int32),
            axes=np.array([], dtype=np.int8),
            horizon=0.25,
            final=c0,
        )
        f = fourier_mode(1)
        ft = martingale_decompose(tr, f, p, sample_times=[0.125, 0.25])
        assert np.allclose(ft.jump_sum, 0.0, atol=1e-12)
        drift0 = apply_generator(lambda cc: field_value(cc, f, p.rho), c0, p)
        assert ft.compensator[:, 0] == pytest.approx(
            [0.125 * drift0, 0.25 * drift0], rel=1e-9
        )
        assert ft.martingale[:, 0] == pytest.approx(
            [-0.125 * drift0, -0.25 * drift0], rel=1e-9
        )
        assert np.abs(ft.decomposition_residual()).max() < 1e-9

    def test_replay_matches_engine_accumulators(self):
        n = 24
        g = build_torus(1, n)
        p = ModelParams.at_stationary_density(1.5, g)
        eta0 = engine.sample_product_configuration(g, p.rho, 8, 0)
        c0 = Configuration(g, eta0)
        st = np.linspace(0.02, 0.12, 4)
        tr = simulate_ctmc(p, c0, 0.12, seed=8)
        ft = martingale_decompose(tr, fourier_mode(1), p, sample_times=st)
        fs = engine.make_field_spec(p, fourier_mode(1).values_on(n)[None])
        out = engine.run_chain_raw(eta0, p, st, (8, 0), field_spec=fs)
        assert np.allclose(ft.X[:, 0], out["X"][:, 0], atol=1e-10)
        assert np.allclose(ft.compensator[:, 0], out["Ddyn"][:, 0], atol=1e-10)
        assert np.allclose(ft.jump_sum[:, 0], out["J"][:, 0], atol=1e-10)

    def test_pathwise_identity(self):
        n = 32
        g = build_torus(1, n)
        p = ModelParams.at_stationary_density(1.0, g)
        for r in range(5):
            eta0 = engine.sample_product_configuration(g, p.rho, 21, r)
            tr = simulate_ctmc(p, Configuration(g, eta0), 0.2, seed=21, replica=r)
            ft = martingale_decompose(tr, fourier_mode(1), p)
            assert np.abs(ft.decomposition_residual()).max() < 1e-9


@pytest.fixture(scope="module")
def ensemble():
    g = build_torus(1, 32)
    p = ModelParams.at_stationary_density(1.0, g)
    return p, run_field_ensemble(
        p,
        [fourier_mode(1)],
        sample_times=np.linspace(0.06, 0.3, 5),
        replicas=600,
        seed=2024,
    )


class TestEnsembleStatistics:

    def test_residuals(self, ensemble):
        _, ens = ensemble
        assert np.abs(ens.decomposition_residual()).max() < 1e-9

    def test_martingale_mean_zero(self, ensemble):
        _, ens = ensemble
        MT = ens.martingale[:, -1, 0]
        se = MT.std(ddof=1) / math.sqrt(len(MT))
        assert abs(MT.mean()) < 4 * se

    def test_compensated_square_mean_zero(self, ensemble):
        _, ens = ensemble
        MT = ens.martingale[:, -1, 0]
        NT = MT**2 - ens.qv_total[:, -1, 0]
        se = NT.std(ddof=1) / math.sqrt(len(NT))
        assert abs(NT.mean()) < 4 * se

    def test_increment_orthogonal_to_past(self, ensemble):
        # regression slope of (M_t - M_s) on X_s is 0 within error
        _, ens = ensemble
        Ms = ens.martingale[:, 1, 0]
        Mt = ens.martingale[:, -1, 0]
        Xs = ens.X[:, 1, 0]
        inc = Mt - Ms
        slope = np.dot(Xs - Xs.mean(), inc - inc.mean()) / np.dot(
            Xs - Xs.mean(), Xs - Xs.mean()
        )
        resid = inc - slope * Xs
        se = resid.std(ddof=2) / math.sqrt(np.dot(Xs - Xs.mean(), Xs - Xs.mean()))
        assert abs(slope) < 4 * se

    def test_qv_constant_function_has_no_exclusion_part(self):
        g = build_torus(1, 16)
        p = ModelParams.at_stationary_density(1.0, g)
        tr = simulate_ctmc(
            p, Configuration(g, engine.sample_product_configuration(g, p.rho, 4, 0)),
            0.1, seed=4,
        )
        qv = predictable_qv(tr, constant_function(), p)
        assert np.allclose(qv.exclusion, 0.0, atol=1e-12)
        assert np.all(qv.reaction[:, 0] > 0)

    def test_marginal_density_stays_near_rho(self, ensemble):
        p, ens = ensemble
        n = p.geometry.n
        frac = ens.particles / n
        mean = frac.mean(axis=0)
        se = frac.std(axis=0, ddof=1) / math.sqrt(frac.shape[0])
        assert np.all(np.abs(mean - p.rho) < 4 * se + 1e-12)


class TestInitialCovariance:
    def test_distinct_modes_uncorrelated(self):
        rep = initial_covariance_test(
            fourier_mode(1), fourier_mode(2), rho=0.57, samples=30_000, n=128, seed=3
        )
        assert abs(rep.z_finite_n()) < 3.0

    def test_same_mode_variance(self):
        rho = 0.569840
        rep = initial_covariance_test(
            fourier_mode(1), fourier_mode(1), rho=rho, samples=30_000, n=128, seed=4
        )
        assert rep.target_continuum == pytest.approx(rho * (1 - rho))
        assert abs(rep.z_continuum()) < 3.0
        assert abs(rep.z_finite_n()) < 3.0

    def test_finite_n_target_exact(self):
        n, rho = 64, 0.4
        f, g_fn = fourier_mode(1), fourier_mode(1)
        rep = initial_covariance_test(f, g_fn, rho, samples=1000, n=n, seed=5)
        vals = f.values_on(n)
        assert rep.target_finite_n == pytest.approx(
            rho * (1 - rho) * float(np.dot(vals, vals)) / n
        )


class TestDriftCandidates:
    def test_lam_zero_values(self):
        cands = drift_candidates(1, 0.0, 0.5)
        base = 4 * np.pi**2
        assert cands["limit-equation"] == pytest.approx(base + 2.0)
        assert cands["martingale-problem"] == pytest.approx(base + 1.0)
        assert cands["linearized-forcing"] == pytest.approx(base + 2.0)

    def test_disagreement_at_positive_lam(self):
        from rdtorus.dynamics import stationary_density

        rho = stationary_density(1.0, 1)
        cands = drift_candidates(1, 1.0, rho)
        vals = sorted(cands.values())
        assert vals[0] < vals[1] < vals[2]


class TestOUFit:
    def test_lam_zero_drift_recovered(self):
        # lam = 0: the chain is exactly linear with drift 4 n^2 sin^2(pi k/n) + 2
        g = build_torus(1, 64)
        p = ModelParams(lam=0.0, geometry=g, rho=0.5)
        k = 1
        dt = 0.05 / drift_candidates(k, 0.0, 0.5)["limit-equation"]
        st = np.arange(dt, 0.4, dt)
        ens = run_field_ensemble(
            p, [fourier_mode(k)], sample_times=st, replicas=240, seed=7,
            field_mode="sample-only",
        )
        fit = ou_fit(ens.X[:, :, 0], dt, k, 0.0, 0.5, n_blocks=8)
        theta_true = 4 * 64**2 * math.sin(math.pi / 64) ** 2 + 2.0
        assert fit.theta_hat > 0
        assert fit.se < 0.15 * fit.theta_hat
        assert abs(fit.theta_hat - theta_true) < max(3.5 * fit.se, 0.1 * theta_true)

    def test_ill_conditioned_lag_grid(self):
        Y = np.random.default_rng(0).normal(size=(50, 200))
        with pytest.raises(IllConditionedFit):
            ou_fit(Y, dt=1.0, k=1, lam=1.0, rho=0.5)  # lags collapse at coarse dt


class TestBGStatistic:
    def test_rejects_nonnegative_offsets(self):
        g = build_torus(1, 32)
        p = ModelParams.at_stationary_density(1.0, g)
        with pytest.raises(ValueError):
            bg_statistic(p, fourier_mode(1), OffsetSet.make([0]), 0.1, 10, 1)

    def test_mean_near_zero_and_decay(self):
        g = build_torus(1, 32)
        p = ModelParams.at_stationary_density(1.0, g)
        rep = bg_statistic(p, fourier_mode(1), OffsetSet.make([-1]), 0.4, 300, 11)
        # centered integrand at near-stationarity: tiny mean
        assert abs(rep.mean) < 6 * math.sqrt(rep.second_moment / rep.replicas) + 1e-3
        g2 = build_torus(1, 64)
        p2 = ModelParams.at_stationary_density(1.0, g2)
        rep2 = bg_statistic(p2, fourier_mode(1), OffsetSet.make([-1]), 0.4, 300, 12)
        assert rep2.second_moment < rep.second_moment


class TestLocalObservables:
    def test_exact_mean_reaction_rate_by_enumeration(self):
        from itertools import product as iproduct

        lam, rho = 1.7, 0.43
        mean = 0.0
        for bits in iproduct((0, 1), repeat=3):
            w = 1.0
            for b in bits:
                w *= rho if b else 1 - rho
            c = bits[1] + (1 - bits[1]) * (1 + lam * bits[0] * bits[2])
            mean += w * c
        assert exact_mean_reaction_rate(lam, rho) == pytest.approx(mean, rel=1e-12)

    def test_mean_is_2rho_at_root(self):
        from rdtorus.dynamics import stationary_density

        for lam in (0.5, 1.0, 3.0):
            rho = stationary_density(lam, 1)
            assert exact_mean_reaction_rate(lam, rho) == pytest.approx(2 * rho, abs=1e-12)

    def test_centered_reaction_terms_match_rates(self):
        # the centered-monomial expansion reproduces c_x - E[c] pointwise
        n, lam = 12, 1.3
        g = build_torus(1, n)
        from rdtorus.dynamics import stationary_density

        rho = stationary_density(lam, 1)
        p = ModelParams(lam=lam, geometry=g, rho=rho)
        terms = centered_reaction_terms(lam, rho)
        rng = np.random.default_rng(9)
        for _ in range(40):
            c = Configuration(g, rng.integers(0, 2, n))
            eb = c.occupancy.astype(float) - rho
            x = int(rng.integers(0, n))
            total = 0.0
            for coeff, offs in terms:
                prod = coeff
                for o in offs:
                    prod *= eb[(x + o) % n]
                total += prod
            direct = reaction_rate(c, x, p) - exact_mean_reaction_rate(lam, rho)
            assert total == pytest.approx(direct, abs=1e-12)

    def test_centered_gradient_terms_match(self):
        n, rho = 10, 0.37
        g = build_torus(1, n)
        rng = np.random.default_rng(10)
        terms = centered_gradient_sq_terms(rho)
        for _ in range(40):
            c = Configuration(g, rng.integers(0, 2, n))
            eb = c.occupancy.astype(float) - rho
            x = int(rng.integers(0, n))
            total = sum(
                coeff * np.prod([eb[(x + o) % n] for o in offs])
                for coeff, offs in terms
            )
            e = c.occupancy.astype(float)
            direct = (e[(x + 1) % n] - e[x]) ** 2 - 2 * rho * (1 - rho)
            assert total == pytest.approx(direct, abs=1e-12)

    def test_time_average_decay_slope(self):
        rep = time_average_local_check(
            [16, 32, 64], lam=1.0, T=0.4, replicas=250, seed=31, psi="reaction"
        )
        assert rep.slope <= -0.4
        assert np.all(np.diff(rep.mean_abs) < 0)

    def test_psi_zero_gives_zero(self):
        rep = time_average_local_check(
            [16, 32], lam=0.0, T=0.2, replicas=10, seed=1, psi="reaction"
        )
        assert np.all(rep.mean_abs == 0.0)
