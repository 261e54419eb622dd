"""Tests for torus geometry, configurations, monomials, and sparse partitions."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdtorus.lattice import (
    Configuration,
    OffsetSet,
    build_torus,
    centered_monomial,
    flip_site,
    sparse_partition,
    swap_sites,
)


def brute_force_neighbors(d, n, site):
    """Independent neighbor enumeration straight from coordinate arithmetic."""
    coords = []
    s = site
    for _ in range(d):
        coords.append(s % n)
        s //= n
    coords = list(reversed(coords))
    out = []
    for j in range(d):
        for step in (+1, -1):
            c = list(coords)
            c[j] = (c[j] + step) % n
            flat = 0
            for v in c:
                flat = flat * n + v
            out.append(flat)
    return out


def bernoulli_weight(config, rho):
    """Exact product weight of a configuration under the Bernoulli measure."""
    w = Fraction(1)
    for b in config.occupancy:
        w *= rho if b else (1 - rho)
    return w


def all_configs(g):
    for key in range(2**g.size):
        yield Configuration.from_key(g, key)


class TestBuildTorus:
    def test_smallest_usable_torus(self):
        g = build_torus(1, 4)
        assert g.size == 4
        for x in range(4):
            assert sorted(g.neighbors(x)) == sorted([(x - 1) % 4, (x + 1) % 4])

    def test_neighbor_count_2d(self):
        g = build_torus(2, 3)
        assert g.size == 9
        for x in range(9):
            nbrs = g.neighbors(x)
            assert len(nbrs) == 4
            assert len(set(nbrs)) == 4

    def test_d3_n2_neighbors_coincide(self):
        # each axis neighbor is the same site both directions when n = 2
        g = build_torus(3, 2)
        assert g.size == 8
        for x in range(8):
            nbrs = g.neighbors(x)
            assert nbrs == brute_force_neighbors(3, 2, x)
            for j in range(3):
                assert nbrs[2 * j] == nbrs[2 * j + 1]

    @pytest.mark.parametrize("d,n", [(1, 3), (2, 4), (3, 3)])
    def test_neighbor_table_matches_brute_force(self, d, n):
        g = build_torus(d, n)
        tab = g.neighbor_table()
        for x in range(g.size):
            assert list(tab[x]) == brute_force_neighbors(d, n, x)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            build_torus(0, 4)
        with pytest.raises(ValueError):
            build_torus(1, 1)

    def test_state_space_cap(self):
        build_torus(1, 8, state_space_cap=2**20)
        with pytest.raises(ValueError):
            build_torus(2, 8, state_space_cap=2**20)

    def test_coords_index_roundtrip(self):
        g = build_torus(3, 4)
        for x in range(g.size):
            assert g.index(g.coords(x)) == x


class TestSwapFlip:
    def test_swap_example(self):
        g = build_torus(1, 4)
        c = Configuration(g, [1, 0, 1, 0])
        out = swap_sites(c, 0, 1)
        assert list(out.occupancy) == [0, 1, 1, 0]
        assert list(c.occupancy) == [1, 0, 1, 0]  # input untouched

    def test_swap_same_site_is_identity(self):
        g = build_torus(1, 4)
        c = Configuration(g, [1, 0, 1, 0])
        assert swap_sites(c, 2, 2) == c

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**8 - 1), st.integers(0, 7), st.integers(0, 7))
    def test_swap_involution(self, key, x, y):
        g = build_torus(1, 8)
        c = Configuration.from_key(g, key)
        assert swap_sites(swap_sites(c, x, y), x, y) == c
        assert swap_sites(c, x, y).particle_count() == c.particle_count()

    def test_flip_example(self):
        g = build_torus(1, 4)
        c = Configuration.empty(g)
        out = flip_site(c, 2)
        assert list(out.occupancy) == [0, 0, 1, 0]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**9 - 1), st.integers(0, 8))
    def test_flip_involution_and_count(self, key, x):
        g = build_torus(2, 3)
        c = Configuration.from_key(g, key)
        assert flip_site(flip_site(c, x), x) == c
        assert abs(flip_site(c, x).particle_count() - c.particle_count()) == 1

    def test_state_key_roundtrip(self):
        g = build_torus(1, 6)
        for key in (0, 1, 37, 63):
            assert Configuration.from_key(g, key).state_key() == key


class TestCenteredMonomial:
    def test_empty_product(self):
        g = build_torus(1, 4)
        c = Configuration.empty(g)
        assert centered_monomial(c, OffsetSet.make([]), 0, 0.3) == 1

    def test_single_offset(self):
        g = build_torus(1, 4)
        c = Configuration(g, [1, 0, 0, 0])
        assert centered_monomial(c, OffsetSet.make([0]), 0, 0.5) == 0.5

    def test_rejects_bad_density(self):
        g = build_torus(1, 4)
        c = Configuration.empty(g)
        with pytest.raises(ValueError):
            centered_monomial(c, OffsetSet.make([0]), 0, 1.5)

    def test_exact_mean_zero_under_product_measure(self):
        # |A| = 2 distinct offsets: exact sum over all 2^(n^d) states is zero
        g = build_torus(1, 4)
        rho = Fraction(3, 7)
        acc = Fraction(0)
        for c in all_configs(g):
            acc += bernoulli_weight(c, rho) * centered_monomial(
                c, OffsetSet.make([0, 2]), 1, rho
            )
        assert acc == 0

    def test_disjoint_translates_uncorrelated(self):
        # exact covariance of monomials over disjoint offset translates is zero
        g = build_torus(1, 6)
        rho = Fraction(2, 5)
        A = OffsetSet.make([0, 1])
        cov = Fraction(0)
        for c in all_configs(g):
            w = bernoulli_weight(c, rho)
            cov += (
                w
                * centered_monomial(c, A, 0, rho)
                * centered_monomial(c, A, 3, rho)
            )
        assert cov == 0

    def test_offsetset_negativity_flag(self):
        assert OffsetSet.make([-1, -2]).strictly_negative()
        assert not OffsetSet.make([-1, 0]).strictly_negative()


class TestNuRhoSwapInvariance:
    @pytest.mark.parametrize("d,n", [(1, 4), (1, 8), (2, 2), (2, 3)])
    def test_weight_invariance_under_swaps(self, d, n):
        g = build_torus(d, n)
        rho = Fraction(1, 3)
        for c in all_configs(g):
            w = bernoulli_weight(c, rho)
            for x in range(g.size):
                for y in range(g.size):
                    assert bernoulli_weight(swap_sites(c, x, y), rho) == w


def partition_is_valid(g, part):
    seen = set()
    for cls in part.classes:
        assert not (cls & seen), "classes overlap"
        seen |= cls
        members = sorted(cls)
        for i, x in enumerate(members):
            for y in members[i + 1 :]:
                assert g.wrap_distance(x, y) >= part.k
    assert seen == set(range(g.size)), "classes do not cover the torus"


class TestSparsePartition:
    def test_1d_example(self):
        g = build_torus(1, 5)
        part = sparse_partition(g, 2)
        classes = sorted(sorted(c) for c in part.classes)
        assert classes == [[0, 2], [1, 3], [4]]
        assert part.class_count() == 3  # = 2k - 1

    def test_k1_single_class(self):
        for n in (2, 5, 9):
            g = build_torus(1, n)
            part = sparse_partition(g, 1)
            assert part.class_count() == 1
            assert part.classes[0] == frozenset(range(n))

    def test_2d_example(self):
        g = build_torus(2, 4)
        part = sparse_partition(g, 2)
        assert part.class_count() <= 9
        partition_is_valid(g, part)

    def test_rejects_bad_radius(self):
        g = build_torus(1, 5)
        with pytest.raises(ValueError):
            sparse_partition(g, 6)
        with pytest.raises(ValueError):
            sparse_partition(g, 0)

    @pytest.mark.parametrize("d,n", [(1, 7), (1, 12), (2, 5), (3, 3)])
    def test_validity_and_count_bound(self, d, n):
        g = build_torus(d, n)
        for k in range(1, n + 1):
            part = sparse_partition(g, k)
            assert part.class_count() <= (2 * k - 1) ** d
            partition_is_valid(g, part)


def test_wrap_distance_symmetric_examples():
    g = build_torus(2, 5)
    a = g.index((0, 0))
    b = g.index((4, 3))
    assert g.wrap_distance(a, b) == 2  # (|0-4| wraps to 1, |0-3| wraps to 2)
    assert g.wrap_distance(a, b) == g.wrap_distance(b, a)


def test_configuration_rejects_bad_shapes():
    g = build_torus(1, 4)
    with pytest.raises(ValueError):
        Configuration(g, [1, 0])
    with pytest.raises(ValueError):
        Configuration(g, [2, 0, 0, 0])
