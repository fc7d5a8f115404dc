import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import zeta

from gefzeros import spectral as sp
from gefzeros.test_functions import builtin, builtin_names, dilate, laplacian_function, rotate, scale, translate

GAUSS = builtin("gaussian")
IND = builtin("indicator")
BUMP = builtin("smooth_bump")
CONE = builtin("cone", alpha=0.6)
ABN = builtin("abnormal", alpha=0.5)
ALL = {"indicator": IND, "gaussian": GAUSS, "cone": CONE, "abnormal": ABN, "log_minus": builtin("log_minus"),
       "smooth_bump": BUMP}


def mp_M(mu):
    mp.mp.dps = 30
    x = mp.pi**2 * mp.mpf(mu) ** 2
    # the head is summed directly so that nsum only sees a monotone tail
    K = int(2 * x) + 10
    head = mp.fsum(mp.mpf(a) ** -3 * mp.exp(-x / a) for a in range(1, K + 1))
    tail = mp.nsum(lambda a: a**-3 * mp.exp(-x / a), [K + 1, mp.inf], method="e")
    return float(mp.pi**3 * mp.mpf(mu) ** 4 * (head + tail))


def mp_M_mp(mu):
    x = mp.pi**2 * mu**2
    return mp.pi**3 * mu**4 * mp.nsum(lambda a: a**-3 * mp.exp(-x / a), [1, mp.inf])


class TestConstants:
    @pytest.mark.parametrize("s", [1.5, 2.0, 3.0, 5.0])
    def test_zeta(self, s):
        assert sp.zeta_richardson(s) == pytest.approx(zeta(s), rel=1e-14)

    def test_coefficients(self):
        assert sp.SMOOTH_COEFFICIENT == pytest.approx(zeta(3.0) / (16 * math.pi))
        assert sp.BOUNDARY_COEFFICIENT == pytest.approx(zeta(1.5) / (8 * math.pi**1.5))
        assert sp.POTENTIAL_BOUND == pytest.approx(0.9440932840407696, rel=1e-14)


class TestSpectralDensity:
    def test_frozen(self):
        # oracle: mpmath series (test_matches_mpmath)
        assert sp.spectral_density_M(0.1) == pytest.approx(0.0034110844942000485, rel=1e-13)

    @pytest.mark.parametrize("mu", [1e-3, 0.05, 0.3, 1.0, 1.163, 2.5, 6.0, 6.4])
    def test_matches_mpmath(self, mu):
        assert sp.spectral_density_M(mu) == pytest.approx(mp_M(mu), rel=1e-13)

    @pytest.mark.parametrize("mu", [0.2, 0.9, 3.0])
    def test_direct_partial_sum(self, mu):
        assert sp.spectral_density_M(mu) == pytest.approx(sp.spectral_density_M_direct(mu, 2_000_000), rel=1e-9)

    def test_zero_and_limit(self):
        assert sp.spectral_density_M(0.0) == 0.0
        assert abs(sp.spectral_density_M(20.0) - 1 / math.pi) < 1e-3
        assert sp.spectral_density_M(1e3) == 1 / math.pi

    def test_small_frequency_law(self):
        mu = 1e-3
        assert sp.spectral_density_M(mu) == pytest.approx(math.pi**3 * zeta(3.0) * mu**4, rel=1e-4)

    def test_switch_continuity(self):
        mu = math.sqrt(sp.X_SWITCH) / math.pi
        below = sp.spectral_density_M(mu * (1 - 1e-12))
        assert below == pytest.approx(1 / math.pi, rel=1e-14)
        assert mp_M(mu) == pytest.approx(1 / math.pi, rel=1e-14)

    def test_overshoot(self):
        assert sp.M_SUP > 1 / math.pi
        mp.mp.dps = 30
        top = mp.findroot(lambda m: mp.diff(lambda t: mp_M_mp(t), m), 0.5935)
        assert sp.M_SUP == pytest.approx(float(mp_M_mp(top)), rel=1e-12)
        assert sp.spectral_density_M(np.linspace(0, 10, 20001)).max() <= sp.M_SUP * (1 + 1e-12)

    def test_comparability(self):
        lam = np.logspace(-3, 3, 4001)
        r = sp.ratio_to_min(lam)
        assert r.min() >= sp.RATIO_LOWER * (1 - 1e-12)
        assert r.max() <= sp.RATIO_UPPER
        assert sp.RATIO_LOWER == pytest.approx(0.3179841145424442, rel=1e-13)

    def test_ratio_decreasing_below_one(self):
        r = sp.ratio_to_min(np.linspace(1e-3, 1.0, 2000))
        assert np.all(np.diff(r) < 0)

    @given(st.floats(0.0, 50.0))
    def test_series_positive(self, x):
        assert 0.0 < sp.series_S(x) <= zeta(3.0)

    def test_series_rejects_negative(self):
        with pytest.raises(ValueError):
            sp.series_S(-1.0)


class TestVariance:
    def test_frozen_indicator(self):
        # oracle: pair-measure route and Monte Carlo (acceptance)
        assert sp.variance_exact(IND, 6.0) == pytest.approx(2.2167912808817922, rel=1e-10)

    def test_frozen_gaussian(self):
        assert sp.variance_exact(GAUSS, 4.0) == pytest.approx(0.017287003146442687, rel=1e-10)

    @pytest.mark.parametrize("R", [0.5, 3.0, 12.0])
    def test_scaling_identity(self, R):
        a = sp.variance_exact(BUMP, 3.0 * R)
        b = sp.variance_exact(dilate(BUMP, 3.0), R)
        assert a == pytest.approx(b, rel=1e-12)

    def test_translation_invariance(self):
        t = translate(GAUSS, 0.4 - 0.2j)
        assert sp.variance_exact(t, 3.0, tol=1e-6) == pytest.approx(sp.variance_exact(GAUSS, 3.0), rel=1e-7)

    def test_rotation_invariance(self):
        r = rotate(translate(BUMP, 0.3), 0.9)
        assert sp.variance_exact(r, 2.0, tol=1e-6) == pytest.approx(sp.variance_exact(BUMP, 2.0), rel=1e-7)

    def test_quadratic_in_scale(self):
        assert sp.variance_exact(scale(GAUSS, 3.0), 5.0) == pytest.approx(9 * sp.variance_exact(GAUSS, 5.0))

    def test_error_reported(self):
        v, err = sp.variance_exact(GAUSS, 8.0, return_error=True)
        assert err < 1e-8 and v > 0

    def test_tolerance_error(self):
        with pytest.raises(sp.VarianceToleranceError):
            sp.variance_exact(IND, 6.0, tol=1e-18)

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            sp.variance_exact(GAUSS, 0.0)

    @pytest.mark.parametrize("R", [2.0, 6.0, 16.0])
    @pytest.mark.parametrize("name", ["indicator", "gaussian", "cone", "abnormal", "smooth_bump"])
    def test_bounds(self, name, R):
        h = ALL[name]
        v = sp.variance_exact(h, R)
        lo, hi = sp.variance_two_sided(h, R)
        assert lo <= v <= hi
        assert v <= sp.l2_bound(h, R)

    @pytest.mark.parametrize("R", [2.0, 8.0])
    def test_smooth_bound(self, R):
        assert sp.variance_exact(BUMP, R) <= sp.smooth_bound(BUMP, R) * (1 + 1e-9)

    def test_smooth_asymptotics(self):
        ratios = [sp.variance_exact(GAUSS, R) / sp.asymptotic_smooth(GAUSS, R) for R in (8.0, 16.0, 32.0)]
        assert np.all(np.diff(ratios) > 0) and 0.99 < ratios[-1] < 1.0

    def test_asymptotic_rejects_rough(self):
        with pytest.raises(ValueError):
            sp.asymptotic_smooth(IND, 4.0)

    def test_boundary_asymptotics(self):
        r = sp.variance_exact(IND, 64.0) / sp.asymptotic_indicator(2 * math.pi, 64.0)
        assert abs(r - 1) < 1e-4

    def test_cone_decay(self):
        v = [sp.variance_exact(CONE, R) for R in (8.0, 16.0, 32.0)]
        assert v[0] > v[1] > v[2]

    def test_low_frequency_part(self):
        c = sp.cutoff_lower_constant()
        assert c == pytest.approx(0.01328, rel=1e-3)
        for R in (4.0, 8.0):
            lhs = sp.variance_exact(CONE, R)
            assert lhs >= c * sp.low_frequency_laplacian_l2_squared(CONE, R) / R**2

    def test_laplacian_l2_quadrature(self):
        # metadata-free route through the transform
        from dataclasses import replace

        g = replace(GAUSS, laplacian_l2_norm=None)
        assert sp.laplacian_l2_squared(g) == pytest.approx(4 * math.pi, rel=1e-8)


class TestPotential:
    @pytest.mark.parametrize("name", builtin_names())
    def test_bound(self, name):
        g = ALL[name]
        assert sp.potential_variance_exact(g) <= sp.potential_bound(g)

    def test_laplacian_consistency(self):
        # int U Delta g = 2 pi (n - E n): Var int U g_R equals V(R, h) for g = Delta h(./R) / (2 pi)
        R = 3.0
        g = scale(laplacian_function(dilate(GAUSS, R)), 1 / (2 * math.pi))
        assert sp.potential_variance_exact(g) == pytest.approx(sp.variance_exact(GAUSS, R), rel=1e-9)

    def test_multiplier_limit(self):
        assert sp.potential_multiplier(0.0) == pytest.approx(0.25 * math.pi * zeta(3.0))


class TestReports:
    def test_report_fields(self):
        r = sp.variance_report(IND, 4.0, perimeter=2 * math.pi, mc=(1.0, 0.1))
        assert r.asymptotic_prediction == pytest.approx(sp.asymptotic_indicator(2 * math.pi, 4.0))
        assert r.lower_bound <= r.exact <= r.upper_bound
        assert r.to_dict()["mc_estimate"] == 1.0

    def test_csv(self):
        text = sp.reports_to_csv([sp.variance_report(GAUSS, 2.0), sp.variance_report(CONE, 2.0)])
        lines = text.split("\r\n")
        assert lines[0] == ",".join(sp.REPORT_COLUMNS)
        assert lines[2].startswith("cone_0.6,2.0,") and lines[2].endswith(",,")
