import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smlab.dist import (
    Coupling,
    DiscreteDistribution,
    TypeClassSpec,
    discretize_gaussian,
    distribution_from_json,
    entropy,
    kl_arrays,
    kl_divergence,
    largest_remainder_counts,
    multinomial,
    mutual_information,
    type_class_enumerate,
    type_class_sample,
)
from smlab.errors import (
    AbsoluteContinuityViolation,
    ConfigError,
    DimensionMismatch,
    EnumerationTooLarge,
)


def h_direct(ps):
    return -sum(p * math.log(p) for p in ps if p > 0)


def hb(p):
    return h_direct([p, 1 - p])


def on_line(probs):
    return DiscreteDistribution(np.arange(len(probs), dtype=float), probs)


prob_vectors = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6).map(
    lambda w: np.array(w) / sum(w))


class TestConstruction:
    def test_duplicates_merge_in_first_order(self):
        d = DiscreteDistribution.finite([[2.0], [1.0], [2.0]], [0.25, 0.5, 0.25])
        assert d.size == 2
        np.testing.assert_array_equal(d.points[:, 0], [2.0, 1.0])
        np.testing.assert_allclose(d.probs, [0.5, 0.5])

    def test_probs_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DiscreteDistribution.finite([[0.0], [1.0]], [0.5, 0.6])

    def test_negative_probs_rejected(self):
        with pytest.raises(ValueError):
            DiscreteDistribution.finite([[0.0], [1.0]], [1.5, -0.5])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            DiscreteDistribution.finite([[0.0], [1.0]], [1.0])

    def test_immutable(self):
        d = DiscreteDistribution.rademacher()
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_rademacher_cube(self):
        d = DiscreteDistribution.rademacher(3)
        assert d.size == 8 and d.n == 3
        np.testing.assert_allclose(d.mean(), 0.0)
        assert d.second_moment() == pytest.approx(3.0)


class TestEntropyKL:
    def test_point_mass(self):
        assert entropy(DiscreteDistribution.point_mass(3.0)) == 0.0

    def test_rademacher(self):
        assert entropy(DiscreteDistribution.rademacher()) == pytest.approx(math.log(2), abs=1e-15)

    def test_quarter(self):
        assert entropy(on_line([0.25, 0.75])) == pytest.approx(h_direct([0.25, 0.75]), abs=1e-15)
        assert entropy(on_line([0.25, 0.75])) == pytest.approx(0.562335, abs=1e-6)

    def test_kl_examples(self):
        half = on_line([0.5, 0.5])
        assert kl_divergence(half, half) == 0.0
        assert kl_divergence(on_line([1.0, 0.0]), half) == pytest.approx(math.log(2))
        direct = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
        assert kl_divergence(on_line([0.9, 0.1]), half) == pytest.approx(direct, abs=1e-15)
        assert direct == pytest.approx(0.368064, abs=1e-6)

    def test_kl_absolute_continuity(self):
        with pytest.raises(AbsoluteContinuityViolation):
            kl_divergence(on_line([0.5, 0.5]), on_line([1.0, 0.0]))
        with pytest.raises(AbsoluteContinuityViolation):
            kl_arrays([0.5, 0.5], [1.0, 0.0])

    def test_kl_needs_same_atoms(self):
        with pytest.raises(DimensionMismatch):
            kl_divergence(on_line([0.5, 0.5]), DiscreteDistribution.rademacher())

    @given(prob_vectors, st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_kl_nonnegative(self, p, seed):
        q = np.random.default_rng(seed).dirichlet(np.ones(p.size))
        assert kl_arrays(p, q) >= 0.0
        assert kl_arrays(p, p) == pytest.approx(0.0, abs=1e-15)

    @given(st.integers(2, 6), st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_entropy_concave(self, k, seed):
        rng = np.random.default_rng(seed)
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        mid = entropy(on_line(0.5 * p + 0.5 * q))
        assert mid >= 0.5 * entropy(on_line(p)) + 0.5 * entropy(on_line(q)) - 1e-12


class TestMutualInformation:
    def test_product_and_diagonal(self):
        r = DiscreteDistribution.rademacher()
        assert mutual_information(Coupling.product(r, r)) == pytest.approx(0.0, abs=1e-15)
        assert mutual_information(Coupling.diagonal(r)) == pytest.approx(math.log(2), abs=1e-15)

    def test_flip_quarter(self):
        r = DiscreteDistribution.rademacher()
        c = Coupling(r, r, [[0.375, 0.125], [0.125, 0.375]])
        assert mutual_information(c) == pytest.approx(math.log(2) - hb(0.25), abs=1e-14)
        assert mutual_information(c) == pytest.approx(0.130812, abs=1e-6)

    @given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_equals_kl_to_product(self, k, m, seed):
        rng = np.random.default_rng(seed)
        mat = rng.dirichlet(np.ones(k * m)).reshape(k, m)
        c = Coupling(on_line(mat.sum(1)), on_line(mat.sum(0)), mat)
        direct = sum(mat[i, j] * math.log(mat[i, j] / (mat[i].sum() * mat[:, j].sum()))
                     for i in range(k) for j in range(m))
        assert mutual_information(c) == pytest.approx(direct, abs=1e-12)
        assert mutual_information(c) == kl_arrays(c.matrix, np.outer(
            c.matrix.sum(1), c.matrix.sum(0)))

    def test_marginal_check(self):
        r = DiscreteDistribution.rademacher()
        with pytest.raises(ValueError):
            Coupling(r, r, [[0.5, 0.25], [0.0, 0.25]])


class TestTypeClasses:
    def test_counts_small(self):
        r = DiscreteDistribution.rademacher()
        assert len(list(type_class_enumerate(TypeClassSpec(r, 2, (1, 1))))) == 2
        assert len(list(type_class_enumerate(TypeClassSpec(r, 5, (5, 0))))) == 1

    def test_binary_16(self):
        spec = TypeClassSpec(DiscreteDistribution.rademacher(), 16, (8, 8))
        seqs = list(type_class_enumerate(spec))
        assert len(seqs) == math.comb(16, 8) == 12870 == spec.size
        assert len(set(seqs)) == len(seqs)
        assert all(sum(s) == 8 for s in seqs)

    @pytest.mark.parametrize("counts", [(2, 1, 1), (3, 0, 2), (1, 1, 1, 1), (4, 2)])
    def test_enumeration_matches_itertools(self, counts):
        base = on_line(np.full(len(counts), 1.0 / len(counts)))
        spec = TypeClassSpec(base, sum(counts), counts)
        got = set(type_class_enumerate(spec))
        seq = [i for i, c in enumerate(counts) for _ in range(c)]
        assert got == set(itertools.permutations(seq))
        assert spec.size == multinomial(counts) == len(got)

    def test_multinomial_exact_integer(self):
        counts = (7, 5, 3)
        expect = math.factorial(15) // (math.factorial(7) * math.factorial(5) * math.factorial(3))
        assert multinomial(counts) == expect

    def test_cap(self):
        spec = TypeClassSpec(DiscreteDistribution.rademacher(), 30, (15, 15))
        with pytest.raises(EnumerationTooLarge):
            type_class_enumerate(spec, cap=1000)

    def test_largest_remainder(self):
        np.testing.assert_array_equal(largest_remainder_counts([0.5, 0.3, 0.2], 10), [5, 3, 2])
        np.testing.assert_array_equal(largest_remainder_counts([1 / 3, 2 / 3], 3), [1, 2])
        # ties go to the lower index
        np.testing.assert_array_equal(largest_remainder_counts([0.5, 0.5], 3), [2, 1])

    @given(prob_vectors, st.integers(1, 60))
    @settings(max_examples=100, deadline=None)
    def test_largest_remainder_within_one_over_n(self, p, n):
        c = largest_remainder_counts(p, n)
        assert c.sum() == n and np.all(c >= 0)
        assert np.max(np.abs(c / n - p)) < 1.0 / n

    def test_sample_examples(self):
        r = DiscreteDistribution.rademacher()
        assert sorted(type_class_sample(r, 4, 0)) == [-1, -1, 1, 1]
        d = DiscreteDistribution.finite([[5.0], [7.0]], [1 / 3, 2 / 3])
        assert sorted(type_class_sample(d, 3, 0)) == [5.0, 7.0, 7.0]
        d3 = DiscreteDistribution.finite([[0.0], [1.0], [2.0]], [0.5, 0.3, 0.2])
        cnt = Counter(type_class_sample(d3, 10, 1))
        assert (cnt[0.0], cnt[1.0], cnt[2.0]) == (5, 3, 2)

    def test_sample_histogram_seed_free(self):
        d = DiscreteDistribution.finite([[0.0], [1.0], [2.0]], [0.2, 0.45, 0.35])
        hists = {tuple(sorted(Counter(type_class_sample(d, 11, s)).items())) for s in range(20)}
        assert len(hists) == 1

    def test_sample_reproducible_and_varied(self):
        r = DiscreteDistribution.rademacher()
        a, b = type_class_sample(r, 20, 3), type_class_sample(r, 20, 3)
        np.testing.assert_array_equal(a, b)
        assert any(not np.array_equal(a, type_class_sample(r, 20, s)) for s in range(4, 10))

    def test_sample_too_short(self):
        d = DiscreteDistribution.finite([[0.0], [1.0], [2.0]], [0.5, 0.3, 0.2])
        with pytest.raises(ValueError):
            type_class_sample(d, 2, 0)


class TestGaussianGrid:
    def test_three_points(self):
        d = discretize_gaussian(1, 3, 1.0)
        assert d.size == 3
        assert d.mean()[0] == 0.0
        assert d.probs[0] == d.probs[2]

    def test_variance_41(self):
        d = discretize_gaussian(1, 41, 5.0)
        x = np.linspace(-5, 5, 41)
        w = np.exp(-x**2 / 2)
        w /= w.sum()
        assert d.second_moment() == pytest.approx(float(w @ x**2), abs=1e-14)
        assert 0.999 <= d.second_moment() <= 1.001
        assert abs(d.mean()[0]) < 1e-15

    def test_two_dim_is_product(self):
        d1 = discretize_gaussian(1, 5, 3.0)
        d2 = discretize_gaussian(2, 5, 3.0)
        assert d2.size == 25
        for pt, p in zip(d2.points, d2.probs):
            i = int(np.flatnonzero(d1.points[:, 0] == pt[0])[0])
            j = int(np.flatnonzero(d1.points[:, 0] == pt[1])[0])
            assert p == pytest.approx(d1.probs[i] * d1.probs[j], rel=1e-12)

    def test_even_points_rejected(self):
        with pytest.raises(ValueError):
            discretize_gaussian(1, 4, 3.0)


class TestJson:
    def test_kinds(self):
        assert distribution_from_json({"kind": "rademacher", "dim": 2}).size == 4
        f = distribution_from_json({"kind": "finite", "atoms": [[0], [1]], "probs": [0.3, 0.7]})
        np.testing.assert_allclose(f.probs, [0.3, 0.7])
        g = distribution_from_json({"kind": "gaussian_grid", "dim": 1, "points": 7, "half_width": 3})
        assert g.size == 7

    @pytest.mark.parametrize("spec", [
        {}, {"kind": "cauchy"}, {"kind": "finite", "atoms": [[0]]},
        {"kind": "finite", "atoms": [[0], [1]], "probs": [0.5, 0.6]},
        {"kind": "gaussian_grid", "dim": 1, "points": 4, "half_width": 3}, "rademacher",
    ])
    def test_bad_specs(self, spec):
        with pytest.raises(ConfigError):
            distribution_from_json(spec)
