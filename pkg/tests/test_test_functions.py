import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import j0

from gefzeros.test_functions import (
    FlatnessError,
    FourierToleranceError,
    TestFunction,
    UnknownTestFunction,
    builtin,
    builtin_names,
    check_flatness,
    cutoff_psi,
    default_cutoff,
    dilate,
    disc_average_kernel,
    disc_kernel_fourier,
    fourier_numeric,
    grid_text,
    laplacian_function,
    load_grid,
    low_high_split,
    mollify,
    radial_function,
    rotate,
    scale,
    translate,
    zero_function,
)

BUILTINS = {name: builtin(name) for name in builtin_names()}
CONE = builtin("cone", alpha=0.6)
ABNORMAL = builtin("abnormal", alpha=0.5)


def hankel_quad(profile, support, rho, points=None):
    """``2 pi int_0^S profile(r) J0(2 pi rho r) r dr`` by adaptive quadrature."""
    f = lambda r: profile(np.array([r]))[0] * j0(2 * math.pi * rho * r) * r  # noqa: E731
    return 2 * math.pi * integrate.quad(f, 0.0, support, limit=400, points=points, epsabs=1e-13)[0]


def planar(h):
    """Same function without radial metadata, forcing the 2-D transform."""
    return TestFunction(name=h.name + "-2d", evaluate_fn=h.evaluate, support_radius=h.support_radius, l1_norm=h.l1_norm)


class TestCatalog:
    def test_names(self):
        assert set(builtin_names()) == {"indicator", "gaussian", "cone", "abnormal", "log_minus", "smooth_bump"}

    def test_unknown(self):
        with pytest.raises(UnknownTestFunction):
            builtin("no_such")

    def test_shorthand(self):
        assert builtin("cone_0.6").params == {"alpha": 0.6}
        assert builtin("abnormal_0.3").params == {"alpha": 0.3}

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_abnormal_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            builtin("abnormal", alpha=alpha)

    def test_indicator_closed(self):
        h = BUILTINS["indicator"]
        assert h.evaluate(np.array([1.0 + 0j]))[0] == 1.0
        assert h.evaluate(np.array([1.0 + 1e-12]))[0] == 0.0

    def test_not_collected(self):
        assert TestFunction.__test__ is False


class TestFourier:
    @pytest.mark.parametrize("rho", [0.0, 0.13, 0.7, 2.4, 7.9])
    @pytest.mark.parametrize("name", ["indicator", "gaussian", "log_minus", "smooth_bump"])
    def test_radial_against_quadrature(self, name, rho):
        h = BUILTINS[name]
        if name == "log_minus":
            f = lambda r: -math.log(r) * j0(2 * math.pi * rho * r) * r  # noqa: E731
            ref = 2 * math.pi * integrate.quad(f, 0.0, 1.0, limit=400, epsabs=1e-13)[0]
        else:
            ref = hankel_quad(h.profile, h.support_radius, rho)
        assert h.fourier_abs(np.array([rho]))[0] == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("rho", [0.0, 0.3, 1.1, 4.0])
    def test_cone_against_quadrature(self, rho):
        ref = hankel_quad(CONE.profile, 1.0, rho)
        assert CONE.fourier_abs(np.array([rho]))[0] == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("rho", [0.0, 0.3, 1.1, 4.0])
    def test_abnormal_against_quadrature(self, rho):
        ref = hankel_quad(ABNORMAL.profile, 2.0, rho, points=[1.0])
        assert ABNORMAL.fourier_abs(np.array([rho]))[0] == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("lam", [0.0, 0.25 + 0.1j, -0.4 + 0.6j])
    @pytest.mark.parametrize("name", ["gaussian", "smooth_bump"])
    def test_planar_rule(self, name, lam):
        h = BUILTINS[name]
        got = fourier_numeric(planar(h), np.array([lam]))[0]
        assert abs(got - h.fourier(np.array([lam]))[0]) < 1e-8

    def test_radial_check_passes(self):
        fourier_numeric(BUILTINS["smooth_bump"], np.array([0.5, 1.5]), check=True)

    def test_tolerance_error_reports(self):
        h = planar(BUILTINS["indicator"])
        with pytest.raises(FourierToleranceError) as e:
            fourier_numeric(h, np.array([0.7 + 0.2j]), check=True)
        assert e.value.achieved > e.value.target

    @pytest.mark.parametrize("name", ["indicator", "gaussian", "smooth_bump", "log_minus"])
    def test_mass(self, name):
        h = BUILTINS[name]
        assert h.fourier_abs(np.array([0.0]))[0] == pytest.approx(h.l1_norm, rel=1e-9)


class TestNorms:
    @pytest.mark.parametrize("name", builtin_names())
    def test_l2(self, name):
        h = builtin(name) if name not in ("cone", "abnormal") else (CONE if name == "cone" else ABNORMAL)
        S = h.support_radius
        pts = [1.0] if S > 1 else None
        val = integrate.quad(lambda r: h.profile(np.array([r]))[0] ** 2 * r, 0, S, points=pts, limit=400)[0]
        assert h.l2_norm == pytest.approx(math.sqrt(2 * math.pi * val), rel=1e-8)

    @pytest.mark.parametrize("name", ["gaussian", "smooth_bump"])
    def test_laplacian_l2(self, name):
        h = BUILTINS[name]
        val = integrate.quad(lambda r: h.laplacian(np.array([r + 0j]))[0] ** 2 * r, 0, h.support_radius, limit=400)[0]
        assert h.laplacian_l2_norm == pytest.approx(math.sqrt(2 * math.pi * val), rel=1e-6)

    @pytest.mark.parametrize("x", [0.1 + 0.2j, 0.5 - 0.3j, -0.7j, 1.4])
    @pytest.mark.parametrize("name", ["gaussian", "smooth_bump"])
    def test_laplacian_finite_difference(self, name, x):
        h = BUILTINS[name]
        e = 1e-4
        fd = (
            h.evaluate(np.array([x + e, x - e, x + 1j * e, x - 1j * e])).sum() - 4 * h.evaluate(np.array([x]))[0]
        ) / e**2
        assert h.laplacian(np.array([x]))[0] == pytest.approx(fd, abs=1e-5)


class TestCutoff:
    def test_psi_values(self):
        r = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
        assert np.array_equal(cutoff_psi(r), [1.0, 1.0, 1.0, 0.0, 0.0])
        mid = cutoff_psi(np.linspace(1.1, 1.9, 50))
        assert np.all((mid > 0) & (mid < 1)) and np.all(np.diff(mid) < 0)

    def test_default_cutoff_flat(self):
        chi = default_cutoff()
        assert check_flatness(chi) < 1e3
        assert chi.l1_norm == 1.0

    def test_unnormalized_cutoff_rejected(self):
        with pytest.raises(FlatnessError):
            check_flatness(BUILTINS["smooth_bump"])


class TestDerived:
    @given(st.floats(0.2, 8.0), st.floats(0.0, 2.0))
    def test_dilation(self, R, rho):
        h = BUILTINS["gaussian"]
        d = dilate(h, R)
        assert d.fourier_abs(np.array([rho]))[0] == pytest.approx(R * R * h.fourier_abs(np.array([R * rho]))[0])
        assert d.evaluate(np.array([R * 0.3 + 0j]))[0] == pytest.approx(h.evaluate(np.array([0.3 + 0j]))[0])

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_translation_keeps_modulus(self, a, b):
        h = BUILTINS["smooth_bump"]
        t = translate(h, complex(a, b))
        lam = np.array([0.3 + 0.4j])
        assert abs(t.fourier(lam)[0]) == pytest.approx(abs(h.fourier(lam)[0]), rel=1e-12, abs=1e-15)

    def test_translation_phase_against_planar(self):
        t = translate(BUILTINS["gaussian"], 0.5 - 0.25j)
        lam = np.array([0.2 + 0.3j])
        assert abs(t.fourier(lam)[0] - fourier_numeric(planar(t), lam)[0]) < 1e-8

    def test_rotation_radial_invariant(self):
        h = BUILTINS["gaussian"]
        r = rotate(h, 0.7)
        lam = np.array([0.2 + 0.5j])
        assert r.fourier(lam)[0] == pytest.approx(h.fourier(lam)[0])

    def test_mollify(self):
        h = BUILTINS["indicator"]
        m = mollify(h, 0.1)
        assert m.l1_norm == pytest.approx(math.pi, rel=1e-12)
        # away from the boundary layer the average reproduces h up to the polar rule error
        assert m.evaluate(np.array([0.3 + 0j, 1.5 + 0j])) == pytest.approx([1.0, 0.0], abs=1e-8)

    def test_disc_kernel(self):
        eps = 0.2
        mass = integrate.quad(lambda r: disc_average_kernel(np.array([r]), eps)[0] * 2 * math.pi * r, 0, 2 * eps)[0]
        assert mass == pytest.approx(1.0, rel=1e-8)
        assert disc_kernel_fourier(np.array([0.0]), eps)[0] == 1.0

    def test_low_high_split(self):
        h = BUILTINS["smooth_bump"]
        lo, hi = low_high_split(h, 4.0)
        x = np.array([0.1 + 0.2j, 0.6 - 0.1j])
        assert np.allclose(lo.evaluate(x) + hi.evaluate(x), h.evaluate(x), atol=1e-14)
        rho = np.array([0.5, 3.0, 10.0])
        assert np.allclose(lo.fourier_abs(rho) + hi.fourier_abs(rho), h.fourier_abs(rho), atol=1e-14)
        # the high part keeps mean zero
        assert hi.fourier_abs(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-10)

    def test_laplacian_function(self):
        g = laplacian_function(BUILTINS["gaussian"])
        rho = np.array([0.4])
        ref = hankel_quad(g.profile, 5.0, 0.4)
        assert g.fourier_abs(rho)[0] == pytest.approx(ref, abs=1e-9)

    def test_scale_and_zero(self):
        s = scale(BUILTINS["gaussian"], -2.0)
        assert s.l2_norm == pytest.approx(2 * BUILTINS["gaussian"].l2_norm)
        z = zero_function()
        assert z.l2_norm == 0 and z.fourier_abs(np.array([1.0]))[0] == 0

    def test_radial_builder_numeric_rule(self):
        h = radial_function("ramp", lambda r: 1.0 - r, 1.0)
        ref = hankel_quad(h.profile, 1.0, 0.8)
        assert h.fourier_abs(np.array([0.8]))[0] == pytest.approx(ref, abs=1e-10)
        assert h.l1_norm == pytest.approx(math.pi / 3, rel=1e-10)


class TestGrid:
    def test_round_trip(self, tmp_path):
        h = BUILTINS["gaussian"]
        p = tmp_path / "g.txt"
        p.write_text(grid_text(h, 0.05, 5.0))
        g = load_grid(str(p))
        x = np.array([0.3 + 0.2j, 1.0 - 0.7j])
        assert np.allclose(g.evaluate(x), h.evaluate(x), atol=2e-3)
        lam = np.array([0.0, 0.3 + 0.1j])
        assert np.allclose(g.fourier(lam), h.fourier(lam), atol=1e-8)

    def test_bad_header(self):
        with pytest.raises(ValueError):
            load_grid("step 1\n", text=True)

    def test_inconsistent_extent(self):
        text = "# gefzeros-grid v1\nstep 1\nextent 0 3 0 1\n1 2\n3 4\n"
        with pytest.raises(ValueError):
            load_grid(text, text=True)
