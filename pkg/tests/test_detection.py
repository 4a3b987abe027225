import itertools
import math

import numpy as np
import pytest
from scipy import stats

from smlab.detection import (
    binary_divergence,
    candidate_spins,
    clopper_pearson,
    data_processing_check,
    kl_h0_h1_mc,
    ml_statistic,
    simulate_observation,
    threshold_and_exponent,
)
from smlab.dist import DiscreteDistribution
from smlab.errors import CapExceeded
from smlab.spin_models import SpikedTensorModel, free_energy_mc, outer_power

RAD = DiscreteDistribution.rademacher()
LN2 = math.log(2)


class TestSimulation:
    def test_zero_lambda_matches_null(self):
        m = SpikedTensorModel(6, 2, 0.0, RAD)
        u = np.random.default_rng(99).normal(size=(6, 6))
        h0 = [float(np.sum(simulate_observation(m, 0, s).T * u)) for s in range(500)]
        h1 = [float(np.sum(simulate_observation(m, 1, 10_000 + s).T * u)) for s in range(500)]
        assert stats.ks_2samp(h0, h1).pvalue > 0.01

    def test_null_variance(self):
        m = SpikedTensorModel(10, 3, 1.0, RAD)
        T = simulate_observation(m, 0, 1).T
        assert T.size == 1000
        assert np.var(T) == pytest.approx(2 / 10, rel=0.1)

    def test_alternative_mean(self):
        m = SpikedTensorModel(8, 2, 2.0, RAD)
        inst = simulate_observation(m, 1, 3)
        x = inst.spike
        assert sorted(np.sqrt(8) * x) == [-1.0] * 4 + [1.0] * 4
        assert np.sum(x**2) == pytest.approx(1.0)

    def test_reproducible(self):
        m = SpikedTensorModel(6, 3, 1.5, RAD)
        a, b = simulate_observation(m, 1, 7), simulate_observation(m, 1, 7)
        assert a.T.tobytes() == b.T.tobytes()
        with pytest.raises(ValueError):
            simulate_observation(m, 2, 0)

    def test_cap(self):
        with pytest.raises(CapExceeded):
            simulate_observation(SpikedTensorModel(50, 4, 1.0, RAD), 0, 0)


class TestKL:
    def test_zero_lambda(self):
        est = kl_h0_h1_mc(SpikedTensorModel(6, 2, 0.0, RAD), 20, 0)
        assert est.mean == 0.0 and est.stderr == 0.0

    @pytest.mark.parametrize("lam", [0.5, 1.5, 3.0])
    def test_nonnegative(self, lam):
        est = kl_h0_h1_mc(SpikedTensorModel(8, 2, lam, RAD), 200, 1)
        assert est.mean >= -3 * est.stderr

    @pytest.mark.parametrize("lam", [1.0, 2.5])
    def test_free_energy_link(self, lam):
        m = SpikedTensorModel(8, 2, lam, RAD)
        kl = kl_h0_h1_mc(m, 150, 4)
        fe = free_energy_mc(m, 150, 5)
        diff = kl.mean - (8 * lam**2 / 4 - 8 * fe.mean)
        assert abs(diff) <= 3 * math.hypot(kl.stderr, 8 * fe.stderr)
        # with a shared seed the noise draws coincide and the link is exact
        same = free_energy_mc(m, 150, 4)
        assert kl.mean == pytest.approx(8 * lam**2 / 4 - 8 * same.mean, abs=1e-9)


class TestMLStatistic:
    def test_against_brute_force(self):
        m = SpikedTensorModel(8, 2, 1.0, RAD)
        rng = np.random.default_rng(0)
        for _ in range(20):
            T = rng.normal(size=(8, 8))
            best = -math.inf
            for plus in itertools.combinations(range(8), 4):
                v = -np.ones(8)
                v[list(plus)] = 1.0
                v /= math.sqrt(8)
                best = max(best, float(v @ T @ v))
            assert ml_statistic(T, m) == pytest.approx(best, abs=1e-12)

    def test_planted_tensor(self):
        m = SpikedTensorModel(6, 3, 1.0, RAD)
        v0 = m.sample_spin(np.random.default_rng(1))
        assert ml_statistic(outer_power(v0, 3), m) == pytest.approx(
            float(v0 @ v0) ** 3, abs=1e-12)

    def test_zero_tensor(self):
        assert ml_statistic(np.zeros((6, 6)), SpikedTensorModel(6, 2, 1.0, RAD)) == 0.0

    def test_candidates(self):
        m = SpikedTensorModel(8, 2, 1.0, RAD)
        assert candidate_spins(m).shape == (70, 8)
        loose = candidate_spins(m, typicality_tol=0.125)
        # counts (3,5), (4,4), (5,3) of the +1 atom
        assert loose.shape == (56 + 70 + 56, 8)
        with pytest.raises(CapExceeded):
            candidate_spins(m, candidate_cap=10)


class TestBinaryHelpers:
    def test_binary_divergence(self):
        assert binary_divergence(0.3, 0.3) == 0.0
        assert binary_divergence(0.5, 0.1) == pytest.approx(
            0.5 * math.log(5) + 0.5 * math.log(0.5 / 0.9), abs=1e-15)
        assert binary_divergence(0.5, 0.0) == math.inf
        assert binary_divergence(0.0, 0.2) == pytest.approx(-math.log(0.8))

    def test_clopper_pearson(self):
        lo, hi = clopper_pearson(0, 100, 0.05)
        assert lo == 0.0 and hi == pytest.approx(1 - 0.025 ** (1 / 100), rel=1e-9)
        lo, hi = clopper_pearson(50, 100, 0.05)
        assert lo < 0.5 < hi


class TestThreshold:
    def test_large_lambda(self):
        s = threshold_and_exponent(SpikedTensorModel(10, 2, 6.0, RAD), 200, 1)
        assert s.type2_rate.mean < 0.05
        assert s.asymptote == pytest.approx((3 - math.sqrt(LN2)) ** 2)
        assert s.type1_hat == pytest.approx(0.5, abs=0.01)

    def test_asymptote_at_threshold(self):
        lam = 2 * math.sqrt(LN2)
        s = threshold_and_exponent(SpikedTensorModel(6, 2, lam, RAD), 10, 2, h0_trials=51)
        assert s.asymptote == pytest.approx(0.0, abs=1e-15)

    def test_threshold_trend(self):
        vals = [threshold_and_exponent(SpikedTensorModel(n, 2, 2.0, RAD), 20, 3).m_n
                for n in (6, 8, 10)]
        assert all(np.isfinite(vals))
        assert vals[-1] <= 2 * math.sqrt(LN2) + 0.5

    @pytest.mark.parametrize("lam", [2.0, 3.0])
    def test_surrogate_dominance(self, lam):
        s = threshold_and_exponent(SpikedTensorModel(8, 2, lam, RAD), 400, 4)
        assert s.type2_rate.mean <= s.surrogate + 3 * s.type2_rate.stderr
        assert s.exponent_hat == pytest.approx(-math.log(s.surrogate) / 8)

    def test_data_processing(self):
        m = SpikedTensorModel(8, 2, 2.5, RAD)
        s = threshold_and_exponent(m, 300, 5)
        kl = kl_h0_h1_mc(m, 200, 6)
        kl_lo, div_lo = data_processing_check(kl, s)
        assert s.h1_misses == 0 and div_lo > 0
        assert kl_lo / 8 >= div_lo / 8

    def test_data_processing_plug_in(self):
        m = SpikedTensorModel(8, 2, 1.2, RAD)
        s = threshold_and_exponent(m, 400, 7)
        kl = kl_h0_h1_mc(m, 300, 8)
        assert 0 < s.h1_misses < 400
        assert binary_divergence(s.type1_hat, s.type2_rate.mean) <= kl.mean + 3 * kl.stderr
        kl_lo, div_lo = data_processing_check(kl, s)
        assert kl_lo >= div_lo

    def test_reproducible(self):
        m = SpikedTensorModel(6, 2, 2.0, RAD)
        assert threshold_and_exponent(m, 30, 8, h0_trials=51) == \
            threshold_and_exponent(m, 30, 8, h0_trials=51)
