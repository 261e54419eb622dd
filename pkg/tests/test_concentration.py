"""Tests for the exact concentration-inequality checks."""

import math

import numpy as np
import pytest

from rdtorus.concentration import (
    SubgaussianWitness,
    bounded_differences_verify,
    centered_bernoulli,
    chisq_moment_verify,
    default_theta_grid,
    holder_grouped_check,
    minimal_subgaussian_sigma2,
    scaled_bernoulli_sum,
    subgaussian_verify,
    tail_to_moment_constant,
    tail_to_moment_verify,
)
from rdtorus.lattice import build_torus


class TestSubgaussian:
    @pytest.mark.parametrize("rho", np.arange(0.1, 0.95, 0.1))
    def test_centered_bernoulli_quarter(self, rho):
        w = centered_bernoulli(float(rho))
        for rep in subgaussian_verify(w, np.linspace(-20, 20, 81)):
            assert rep.holds(1e-12), rep.label

    def test_degenerate_passes(self):
        w = SubgaussianWitness(values=(0.0,), probs=(1.0,), sigma2=0.01)
        for rep in subgaussian_verify(w):
            assert rep.holds()

    def test_rejects_uncentered(self):
        w = SubgaussianWitness(values=(0.0, 1.0), probs=(0.5, 0.5), sigma2=1.0)
        with pytest.raises(ValueError):
            subgaussian_verify(w)

    def test_sharpness_below_optimum_fails(self):
        # binary-search the minimal passing parameter; just below it the
        # mgf domination must fail
        grid = np.linspace(-20, 20, 81)
        w = centered_bernoulli(0.3)
        smin = minimal_subgaussian_sigma2(w, grid)
        assert smin <= 0.25 + 1e-9  # Hoeffding is an upper bound
        w_bad = SubgaussianWitness(values=w.values, probs=w.probs, sigma2=0.98 * smin)
        mgf_rep = subgaussian_verify(w_bad, grid)[0]
        assert not mgf_rep.holds(1e-15)

    def test_hoeffding_quarter_not_always_tight(self):
        # asymmetric Bernoulli has a strictly smaller optimal parameter
        w = centered_bernoulli(0.1)
        smin = minimal_subgaussian_sigma2(w, np.linspace(-20, 20, 81))
        assert smin < 0.25

    def test_default_grid_span(self):
        grid = default_theta_grid(0.5)
        assert grid.min() == pytest.approx(-40.0)
        assert grid.max() == pytest.approx(40.0)
        assert np.any(grid == 0.0)


class TestChisqMoment:
    def test_boundary_bernoulli_half(self):
        # c = 1/(4 sigma^2) = 1: E[e^{X^2}] = e^{1/4} <= e^2
        w = centered_bernoulli(0.5)
        rep = chisq_moment_verify(w, 1.0)
        assert rep.lhs[0] == pytest.approx(math.exp(0.25))
        assert rep.rhs[0] == pytest.approx(math.exp(2.0))
        assert rep.holds()

    def test_small_c_limit(self):
        w = centered_bernoulli(0.5)
        rep = chisq_moment_verify(w, 1e-9)
        assert rep.lhs[0] == pytest.approx(1.0, abs=1e-8)
        assert rep.rhs[0] == pytest.approx(1.0, abs=1e-7)
        assert rep.holds()

    @pytest.mark.parametrize("m", range(1, 13))
    def test_scaled_sums_by_enumeration(self, m):
        w = scaled_bernoulli_sum(m)
        assert abs(w.mean()) < 1e-12
        for c in (0.1, 0.5, 1.0):
            assert chisq_moment_verify(w, c).holds(1e-12)

    def test_rejects_out_of_range_c(self):
        w = centered_bernoulli(0.5)
        with pytest.raises(ValueError):
            chisq_moment_verify(w, 1.5)
        with pytest.raises(ValueError):
            chisq_moment_verify(w, 0.0)


class TestBoundedDifferences:
    def test_particle_count_vs_binomial_tail(self):
        g = build_torus(1, 8)
        states = np.arange(256)
        count = np.zeros(256)
        for x in range(8):
            count += (states >> x) & 1
        deltas = np.linspace(0.1, 6.0, 25)
        rep = bounded_differences_verify(count, g, 0.5, deltas)
        assert rep.holds(1e-12)
        # oracle: exact binomial tail on a couple of points
        from math import comb

        d = 1.6
        exact = sum(comb(8, k) for k in range(8 + 1) if k - 4.0 > d) / 256.0
        i = int(np.argmin(np.abs(deltas - d)))
        rep2 = bounded_differences_verify(count, g, 0.5, [d])
        assert rep2.lhs[0] == pytest.approx(exact)

    def test_constant_function(self):
        g = build_torus(1, 8)
        rep = bounded_differences_verify(np.ones(256), g, 0.4, [0.1, 1.0])
        assert np.all(rep.lhs == 0.0)
        assert rep.holds()

    def test_generator_field_observable(self):
        # fn = L_n X^n(f): oscillation constants scanned exactly on n = 8
        from rdtorus.dynamics import ModelParams
        from rdtorus.exact import build_generator_matrix, state_bits

        n = 8
        g = build_torus(1, n)
        p = ModelParams.at_stationary_density(1.0, g)
        gen = build_generator_matrix(p)
        f = np.sqrt(2.0) * np.cos(2 * np.pi * np.arange(n) / n)
        Xvec = (state_bits(g) - p.rho) @ f / math.sqrt(n)
        fn = gen.matrix @ Xvec
        rep = bounded_differences_verify(fn, g, p.rho, np.linspace(0.25, 40.0, 30))
        assert rep.holds(1e-12)


class TestTailToMoment:
    def test_zero_witness(self):
        rep = tail_to_moment_verify(1.0, 0.5, witness="zero")
        assert rep.lhs[0] == 0.0
        assert rep.holds()

    @pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 1.5, 1.9])
    def test_uniform_witness(self, theta):
        rep = tail_to_moment_verify(1.0, theta, witness="uniform")
        assert rep.lhs[0] == pytest.approx(1.0 / (1.0 + theta))
        assert rep.holds(1e-12)

    def test_constant_monotone_and_blows_up(self):
        thetas = np.linspace(0.05, 1.95, 30)
        consts = [tail_to_moment_constant(float(t)) for t in thetas]
        assert np.all(np.diff(consts) > 0)
        assert tail_to_moment_constant(1.999) > 1000

    def test_rejects_bad_theta(self):
        with pytest.raises(ValueError):
            tail_to_moment_verify(1.0, 2.0)
        with pytest.raises(ValueError):
            tail_to_moment_verify(1.0, -0.5)

    def test_uniform_witness_needs_valid_tail_constant(self):
        with pytest.raises(ValueError):
            tail_to_moment_verify(0.05, 1.0, witness="uniform")


class TestHolderGrouping:
    @pytest.mark.parametrize(
        "d,n,k,gamma",
        [(1, 8, 2, 0.4), (1, 10, 3, 0.25), (1, 12, 4, 0.1), (2, 3, 2, 0.3)],
    )
    def test_grouped_bound_dominates(self, d, n, k, gamma):
        g = build_torus(d, n)
        rep = holder_grouped_check(g, k, 0.45, gamma)
        assert rep.holds(1e-12)
        assert rep.rhs[0] >= rep.lhs[0] - 1e-12

    def test_k1_is_equality_like(self):
        # one class: the grouped bound collapses to the direct value
        g = build_torus(1, 6)
        rep = holder_grouped_check(g, 1, 0.5, 0.3)
        assert rep.rhs[0] == pytest.approx(rep.lhs[0], rel=1e-12)

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            holder_grouped_check(build_torus(1, 6), 2, 0.5, 0.0)
