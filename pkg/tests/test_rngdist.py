"""Distribution-level checks: analytic moments, KS against reference
CDFs, domain errors, and the determinism contract."""

import numpy as np
import pytest
from scipy import stats

from enetmix import rngdist
from enetmix.errors import (
    DegenerateTruncationError,
    NonPositiveDefiniteError,
    ParameterDomainError,
)
from enetmix.rngdist import RandomSource

from oracles import trunc_invgamma_cdf

N_DRAWS = 100_000


@pytest.fixture
def src():
    return RandomSource(1234)


class TestGamma:
    def test_mean_matches_shape_over_rate(self, src):
        draws = rngdist.sample_gamma(2.0, 2.0, src, size=N_DRAWS)
        assert abs(draws.mean() - 1.0) < 0.02

    def test_variance_within_three_standard_errors(self, src):
        draws = rngdist.sample_gamma(3.0, 1.5, src, size=N_DRAWS)
        true_var = 3.0 / 1.5 ** 2
        se = np.sqrt(2.0 * true_var ** 2 / N_DRAWS)  # var of sample variance, approx
        assert abs(draws.var() - true_var) < 3.5 * se

    def test_unit_gamma_is_exponential(self, src):
        draws = rngdist.sample_gamma(1.0, 1.0, src, size=N_DRAWS)
        ks = stats.kstest(draws, stats.expon.cdf).statistic
        assert ks < 0.01

    @pytest.mark.parametrize("shape,rate", [(0.0, 1.0), (1.0, 0.0), (-2.0, 1.0)])
    def test_rejects_non_positive_parameters(self, src, shape, rate):
        with pytest.raises(ParameterDomainError):
            rngdist.sample_gamma(shape, rate, src)


class TestInvGamma:
    def test_mean_matches_b_over_a_minus_one(self, src):
        draws = rngdist.sample_inv_gamma(3.0, 2.0, src, size=N_DRAWS)
        assert abs(draws.mean() - 1.0) < 0.02

    def test_reciprocal_matches_gamma_moments(self, src):
        draws = rngdist.sample_inv_gamma(2.0, 5.0, src, size=N_DRAWS)
        recip = 1.0 / draws
        assert abs(recip.mean() - 2.0 / 5.0) < 0.02 * (2.0 / 5.0) * 2
        assert abs(recip.var() - 2.0 / 25.0) < 0.02 * (2.0 / 25.0) * 2

    def test_all_positive(self, src):
        assert np.all(rngdist.sample_inv_gamma(0.5, 0.5, src, size=10_000) > 0)

    def test_rejects_negative_shape(self, src):
        with pytest.raises(ParameterDomainError):
            rngdist.sample_inv_gamma(-1.0, 1.0, src)


class TestTruncInvGamma:
    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (2.0, 0.1), (0.5, 30.0)])
    def test_support_is_open_unit_interval(self, src, a, b):
        draws = rngdist.sample_trunc_inv_gamma_01(a, b, src, size=N_DRAWS)
        assert np.all(draws > 0.0)
        assert np.all(draws < 1.0)

    def test_matches_quadrature_cdf(self, src):
        draws = rngdist.sample_trunc_inv_gamma_01(0.5, 0.5, src, size=N_DRAWS)
        ks = stats.kstest(draws, lambda t: trunc_invgamma_cdf(t, 0.5, 0.5)).statistic
        assert ks < 0.01

    def test_inverse_cdf_regime_matches_quadrature(self, src):
        # mass below the rejection threshold exercises the ISF branch
        a, b = 0.5, 6.0
        assert rngdist.trunc_inv_gamma_01_mass(a, b) < 0.2
        draws = rngdist.sample_trunc_inv_gamma_01(a, b, src, size=20_000)
        ks = stats.kstest(draws, lambda t: trunc_invgamma_cdf(t, a, b)).statistic
        assert ks < 0.015

    def test_degenerate_truncation_raises(self, src):
        with pytest.raises(DegenerateTruncationError):
            rngdist.sample_trunc_inv_gamma_01(0.5, 1000.0, src)

    def test_half_variant_never_degenerates(self, src):
        draws = rngdist.trunc_inv_gamma_01_half(1000.0, src, size=5_000)
        assert np.all(draws > 0.0)
        assert np.all(draws < 1.0)

    def test_half_variant_matches_public_sampler_law(self):
        a = RandomSource(7)
        b = RandomSource(7)
        via_public = rngdist.sample_trunc_inv_gamma_01(0.5, 2.0, a, size=50_000)
        via_half = rngdist.trunc_inv_gamma_01_half(2.0, b, size=50_000)
        assert stats.ks_2samp(via_public, via_half).pvalue > 0.01


class TestBeta:
    def test_uniform_special_case(self, src):
        draws = rngdist.sample_beta(1.0, 1.0, src, size=N_DRAWS)
        assert abs(draws.mean() - 0.5) < 0.005

    def test_mean_two_three(self, src):
        draws = rngdist.sample_beta(2.0, 3.0, src, size=N_DRAWS)
        assert abs(draws.mean() - 0.40) < 0.01

    def test_rejects_zero_parameter(self, src):
        with pytest.raises(ParameterDomainError):
            rngdist.sample_beta(0.0, 1.0, src)


class TestDirichlet:
    def test_componentwise_mean(self, src):
        draws = np.array(
            [rngdist.sample_dirichlet([1.0, 1.0, 1.0], src) for _ in range(20_000)]
        )
        assert np.all(np.abs(draws.mean(axis=0) - 1.0 / 3.0) < 0.01)

    def test_every_draw_on_simplex(self, src):
        for _ in range(1_000):
            draw = rngdist.sample_dirichlet([0.3, 2.0, 5.0], src)
            assert abs(draw.sum() - 1.0) < 1e-12
            assert np.all(draw >= 0.0)

    def test_rejects_short_vector(self, src):
        with pytest.raises(ParameterDomainError):
            rngdist.sample_dirichlet([0.5], src)


class TestMvnPrecision:
    def test_identity_precision_unit_variance(self, src):
        draws = np.array(
            [rngdist.sample_mvn_precision(np.zeros(3), np.eye(3), src)
             for _ in range(20_000)]
        )
        assert np.all(np.abs(draws.var(axis=0) - 1.0) < 0.03)

    def test_covariance_is_precision_inverse(self, src):
        precision = np.array([[2.0, 1.0], [1.0, 2.0]])
        expected_cov = np.array([[2 / 3, -1 / 3], [-1 / 3, 2 / 3]])
        draws = np.array(
            [rngdist.sample_mvn_precision(np.zeros(2), precision, src)
             for _ in range(100_000)]
        )
        assert np.max(np.abs(np.cov(draws.T) - expected_cov)) < 0.03

    def test_non_positive_definite_reports_minor(self, src):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(NonPositiveDefiniteError) as err:
            rngdist.sample_mvn_precision(np.zeros(2), bad, src)
        assert err.value.minor == 2

    def test_rejects_asymmetric_matrix(self, src):
        asym = np.array([[1.0, 0.5], [0.1, 1.0]])
        with pytest.raises(ParameterDomainError):
            rngdist.sample_mvn_precision(np.zeros(2), asym, src)


class TestNormalCdf:
    def test_symmetry_point(self):
        assert rngdist.normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_high_precision_reference(self):
        # reference computed with 30-digit mpmath arithmetic
        assert abs(rngdist.normal_cdf(1.96) - 0.9750021048517796) < 1e-12

    def test_far_left_tail_positive(self):
        assert rngdist.normal_cdf(-38.0) > 0.0

    def test_monotone(self):
        x = np.linspace(-40, 40, 20_001)
        assert np.all(np.diff(rngdist.normal_cdf(x)) >= 0.0)

    def test_logcdf_consistent_with_cdf(self):
        x = np.linspace(-5.0, 8.0, 1_000)
        assert np.max(np.abs(
            rngdist.normal_logcdf(x) - np.log(rngdist.normal_cdf(x))
        )) < 1e-9

    def test_logcdf_finite_far_left(self):
        assert np.isfinite(rngdist.normal_logcdf(-300.0))


class TestDeterminism:
    def test_equal_seeds_equal_streams(self):
        a = RandomSource(99)
        b = RandomSource(99)
        for _ in range(5):
            assert np.array_equal(
                rngdist.sample_gamma(1.3, 0.7, a, size=100),
                rngdist.sample_gamma(1.3, 0.7, b, size=100),
            )
        assert np.array_equal(a.uniform(size=50), b.uniform(size=50))

    def test_distinct_streams_differ(self):
        a = RandomSource(99, stream=0)
        b = RandomSource(99, stream=1)
        assert not np.array_equal(a.uniform(size=50), b.uniform(size=50))

    def test_split_reproducible(self):
        a = RandomSource(5).split(3)
        b = RandomSource(5, stream=3)
        assert np.array_equal(a.standard_normal(20), b.standard_normal(20))

    def test_seed_domain(self):
        with pytest.raises(ParameterDomainError):
            RandomSource(-1)
