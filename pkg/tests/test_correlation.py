import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from gefzeros import correlation as corr
from gefzeros.spectral import variance_exact
from gefzeros.test_functions import builtin

GAUSS = builtin("gaussian")


def mp_d(r):
    # geometric-series sums evaluated with enough digits to absorb the cancellation
    mp.mp.dps = 60
    s = mp.mpf(r) ** 2
    q = mp.exp(-s)
    tot = s * s * q * (1 + q) / (1 - q) ** 3 - 4 * s * q / (1 - q) ** 2 + 2 * q / (1 - q)
    return float(tot / mp.pi**2)


def mp_d_sum(r):
    mp.mp.dps = 30
    s = mp.mpf(r) ** 2
    return float(mp.nsum(lambda a: (a * a * s * s - 4 * a * s + 2) * mp.exp(-a * s), [1, mp.inf]) / mp.pi**2)


class TestLaguerre:
    @pytest.mark.parametrize("alpha", range(11))
    def test_against_quadrature(self, alpha):
        assert abs(corr.laguerre_coefficient(alpha) - corr.laguerre_coefficient_oracle(alpha)) < 1e-8

    def test_constant_term(self):
        assert corr.laguerre_coefficient(0) == pytest.approx(-0.5772156649015329 / 2, abs=1e-15)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            corr.laguerre_coefficient(-1)

    def test_variance_identity(self):
        # Var log|zeta| = sum_{a>=1} c_{2a}^2 = pi^2 / 24
        s = math.fsum(corr.laguerre_coefficient(a) ** 2 for a in range(1, 200000))
        assert s == pytest.approx(math.pi**2 / 24, rel=1e-5)


class TestDilogarithm:
    @pytest.mark.parametrize("x", [0.0, 1e-6, 0.1, 0.5, 0.5000001, 0.8, 0.999999, 1.0])
    def test_against_mpmath(self, x):
        assert corr.dilogarithm(x) == pytest.approx(float(mp.polylog(2, x)), rel=1e-14, abs=1e-300)

    def test_domain(self):
        with pytest.raises(ValueError):
            corr.dilogarithm(1.5)

    def test_frozen_covariance(self):
        assert corr.log_modulus_covariance(0.5) == pytest.approx(0.06691315977068316, rel=1e-14)
        assert corr.log_modulus_covariance(1.0) == pytest.approx(math.pi**2 / 24, rel=1e-15)
        assert corr.log_modulus_covariance(0.0) == 0.0

    @given(st.floats(0.0, 1.0))
    def test_monotone(self, rho):
        assert corr.log_modulus_covariance(rho) <= corr.log_modulus_covariance(min(1.0, rho + 0.01))

    def test_series_form(self):
        rho = 0.7
        s = 0.25 * math.fsum(rho ** (2 * a) / a**2 for a in range(1, 400))
        assert corr.log_modulus_covariance(rho) == pytest.approx(s, rel=1e-14)


class TestSmoothDensity:
    @pytest.mark.parametrize("r", [1e-5, 5e-4, 2e-3, 0.05, 0.29, 0.31, 1.0, 2.5, 5.0])
    def test_against_mpmath(self, r):
        assert corr.smooth_density(np.array([r]))[0] == pytest.approx(mp_d(r), rel=1e-12, abs=1e-17)

    @pytest.mark.parametrize("r", [0.7, 1.0, 2.0])
    def test_oracles_agree(self, r):
        assert mp_d(r) == pytest.approx(mp_d_sum(r), rel=1e-20)

    def test_frozen(self):
        assert corr.smooth_density(np.array([1.0]))[0] == pytest.approx(-0.05334015169943616, rel=1e-13)

    def test_small_r_limit(self):
        assert abs(corr.smooth_density(np.array([0.05]))[0] + 1 / math.pi**2) < 1e-3

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 3.0])
    def test_closed_form(self, r):
        assert corr.smooth_density(np.array([r]))[0] == pytest.approx(
            corr.smooth_density_closed(np.array([r]))[0], rel=1e-10
        )

    def test_total_mass(self):
        val = integrate.quad(lambda r: corr.smooth_density(np.array([r]))[0] * 2 * math.pi * r, 1e-9, 12, limit=200)
        assert val[0] == pytest.approx(-1 / math.pi, rel=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            corr.smooth_density(np.array([0.0]))

    def test_pair_correlation_record(self):
        pc = corr.pair_correlation_smooth(1.0)
        assert pc.with_intensity == pytest.approx(1 / math.pi**2 + pc.smooth_density)

    def test_csv(self):
        lines = corr.pair_correlation_csv([0.5, 1.0]).split("\r\n")
        assert lines[0] == "r,d,with_intensity" and len(lines) == 4


class TestPairMeasureVariance:
    def test_gaussian(self):
        assert corr.variance_from_pair_measure(GAUSS, 4.0) == pytest.approx(variance_exact(GAUSS, 4.0), rel=1e-3)

    def test_small_indicator(self):
        h = builtin("indicator")
        assert corr.variance_from_pair_measure(h, 0.05) == pytest.approx(variance_exact(h, 0.05), rel=1e-6)

    @pytest.mark.parametrize("shift", [0.0, 0.5, 2.0])
    def test_gaussian_autocorrelation(self, shift):
        # int exp(-|x|^2 - |x + s|^2) dA = (pi / 2) exp(-s^2 / 2)
        got = corr.autocorrelation(GAUSS, 1.0, np.array([shift]))[0]
        assert got == pytest.approx(math.pi / 2 * math.exp(-shift * shift / 2), rel=1e-8)


class TestPairCounts:
    def test_disk_covariance(self):
        assert corr.disk_set_covariance(np.array([0.0]), 2.0)[0] == pytest.approx(4 * math.pi)
        assert corr.disk_set_covariance(np.array([4.0, 5.0]), 2.0).tolist() == [0.0, 0.0]

    def test_counts_ordered_pairs(self):
        z = np.array([0.0, 0.5, 0.5j, 5.0])
        c = corr.pair_distance_counts(z, [0.0, 0.6, 1.0], 3.0)
        assert c.tolist() == [4.0, 2.0]

    def test_expected_total_pairs(self):
        # E n(n-1) = Var n + (E n)^2 - E n for the disk of radius 6
        total = corr.expected_pair_counts(np.linspace(0.0, 12.0, 241), 6.0).sum()
        v = variance_exact(builtin("indicator"), 6.0)
        assert total == pytest.approx(v + 36.0**2 - 36.0, rel=1e-9)
