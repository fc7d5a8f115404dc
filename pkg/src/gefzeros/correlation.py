"""Correlation structure of the potential ``log|F*|`` and of the zero process.

* Hermite-Laguerre coefficients ``c_{2a}`` of ``log|zeta|``.
* ``Cov(log|F*(x)|, log|F*(y)|) = (1/4) sum_a rho^(2a) / a^2`` with
  ``rho = exp(-|x - y|^2 / 2)``.
* The covariance measure of the zero counting measure: a diagonal atom of
  density ``1/pi`` plus the smooth density

      d(r) = pi^-2 sum_{a>=1} (a^2 r^4 - 4 a r^2 + 2) exp(-a r^2),

  which tends to ``-1/pi^2`` as ``r -> 0`` and integrates to ``-1/pi``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import eval_laguerre, roots_legendre

from .gef import EULER_GAMMA
from .test_functions import TestFunction

#: diagonal atom of the two-point measure (first intensity of zeros)
DIAGONAL_ATOM = 1.0 / math.pi
#: ``lim_{r -> 0} d(r)``
SMOOTH_DENSITY_AT_ZERO = -1.0 / math.pi**2
COMPENSATED_BELOW = 0.3
SERIES_BELOW = 1e-3


def laguerre_coefficient(alpha: int) -> float:
    """``c_0 = -gamma/2`` and ``c_{2a} = (-1)^(a+1) / (2a)`` for ``a >= 1``."""
    alpha = int(alpha)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0:
        return -0.5 * EULER_GAMMA
    return (-1.0) ** (alpha + 1) / (2.0 * alpha)


def laguerre_coefficient_oracle(alpha: int, tol: float = 1e-11) -> float:
    """``int_0^inf (1/2) log t (-1)^a L_a(t) e^-t dt`` by adaptive quadrature.

    The log singularity on ``[0, 1]`` is handled by QUADPACK's algebraic-log
    weight; the infinite part by a mapped rule.
    """
    alpha = int(alpha)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    sign = (-1.0) ** alpha

    def poly(t):
        return 0.5 * sign * eval_laguerre(alpha, t) * math.exp(-t)

    head, e1 = integrate.quad(poly, 0.0, 1.0, weight="alg-loga", wvar=(0.0, 0.0), epsabs=1e-14, limit=200)
    mid, e2 = integrate.quad(lambda t: poly(t) * math.log(t), 1.0, 80.0, epsabs=1e-14, limit=400)
    tail, e3 = integrate.quad(lambda t: poly(t) * math.log(t), 80.0, np.inf, epsabs=1e-14, limit=200)
    err = e1 + e2 + e3
    if err > tol:
        raise RuntimeError(f"quadrature error estimate {err:.3g} above {tol:.3g}")
    return head + mid + tail


def _li2_series(x: float) -> float:
    """``sum_{a>=1} x^a / a^2`` for ``0 <= x <= 1/2`` with a geometric tail bound."""
    if x == 0.0:
        return 0.0
    terms = []
    a = 1
    p = x
    while True:
        terms.append(p / (a * a))
        # remaining terms are below p x / ((a+1)^2 (1 - x))
        if p * x / ((a + 1) ** 2 * (1.0 - x)) < 1e-18 * terms[0]:
            break
        a += 1
        p *= x
    return math.fsum(reversed(terms))


def dilogarithm(x: float) -> float:
    """``Li_2(x)`` on ``[0, 1]`` via the series and the reflection formula."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 1.0:
        return math.pi**2 / 6
    if x <= 0.5:
        return _li2_series(x)
    return math.pi**2 / 6 - math.log(x) * math.log1p(-x) - _li2_series(1.0 - x)


def log_modulus_covariance(rho: float) -> float:
    """``Cov(log|z1|, log|z2|) = Li_2(rho^2) / 4`` for ``|E z1 conj(z2)| = rho``."""
    rho = float(rho)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return 0.25 * dilogarithm(rho * rho)


@dataclass(frozen=True)
class PairCorrelation:
    radius: float
    smooth_density: float
    with_intensity: float


def _terms_needed(r2: float, tol: float) -> int:
    # (a^2 r^4 + 4 a r^2 + 2) e^{-a r^2} < tol once a r^2 exceeds this
    t = -math.log(tol) + 2.0 * math.log(1.0 + 1.0 / r2) + 10.0
    return int(math.ceil(max(t, 4.0) / r2)) + 1


def smooth_density(r, tol: float = 1e-17) -> np.ndarray:
    """``d(r)`` for ``r > 0`` by direct summation (vectorized).

    Terms are summed until the remaining tail is below ``tol``.  Below
    ``r = 0.3`` the three blocks are individually ``O(r^-2)`` and cancel, so
    those points use exactly rounded (``math.fsum``) summation; below
    ``r = 1e-3`` the Taylor expansion in ``r^2`` is used.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    flat = r.ravel()
    out = np.empty(flat.size)
    for i, ri in enumerate(flat):
        r2 = ri * ri
        if ri < SERIES_BELOW:
            # pi^2 d = -1 + s/2 - s^3/36 + O(s^5), s = r^2
            out[i] = -1.0 + 0.5 * r2 - r2**3 / 36.0
            continue
        K = _terms_needed(r2, tol)
        a = np.arange(1, K + 1, dtype=float)
        terms = (a * a * r2 * r2 - 4.0 * a * r2 + 2.0) * np.exp(-a * r2)
        if ri < COMPENSATED_BELOW:
            out[i] = math.fsum(terms)
        else:
            out[i] = float(np.sum(terms))
    return out.reshape(r.shape) / math.pi**2


def smooth_density_closed(r) -> np.ndarray:
    """Geometric-series closed form of ``d(r)`` (oracle; loses accuracy as ``r -> 0``)."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    q = np.exp(-r2)
    om = -np.expm1(-r2)
    return (r2 * r2 * q * (1 + q) / om**3 - 4 * r2 * q / om**2 + 2 * q / om) / math.pi**2


def pair_correlation_smooth(r: float, tol: float = 1e-17) -> PairCorrelation:
    """Smooth two-point density ``d(r)`` and the pair intensity ``1/pi^2 + d(r)``."""
    if not r > 0:
        raise ValueError("r must be positive")
    d = float(smooth_density(np.array([r]), tol)[0])
    return PairCorrelation(float(r), d, 1.0 / math.pi**2 + d)


def pair_correlation_csv(r_values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["r", "d", "with_intensity"])
    for r in r_values:
        pc = pair_correlation_smooth(float(r))
        w.writerow([repr(pc.radius), repr(pc.smooth_density), repr(pc.with_intensity)])
    return buf.getvalue()


# -- variance through the pair measure ----------------------------------------------------


def _gl_panels(a: float, b: float, panels: int, n: int):
    x, w = roots_legendre(n)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def autocorrelation(h: TestFunction, R: float, r, n_r: int = 48, n_t: int = 96, panels: int = 8):
    """``C(r) = int h(x/R) h((x + r)/R) dA(x)`` by polar product quadrature.

    For radial ``h`` this is independent of the direction of the shift; for
    others it is averaged over 16 shift directions.
    """
    r = np.asarray(r, dtype=float)
    S = h.support_radius * R
    rr, wr = _gl_panels(0.0, S, panels, n_r // 2)
    t = 2 * math.pi * np.arange(n_t) / n_t
    x = (rr[:, None] * np.exp(1j * t)[None, :]).ravel()
    w = ((wr * rr)[:, None] * np.full(n_t, 2 * math.pi / n_t)).ravel()
    hx = h.evaluate(x / R) * w
    dirs = [1.0] if h.is_radial else list(np.exp(2j * math.pi * np.arange(16) / 16))
    out = np.zeros(r.shape)
    flat = r.ravel()
    for k, ri in enumerate(flat):
        acc = 0.0
        for u in dirs:
            acc += float(hx @ h.evaluate((x + ri * u) / R))
        out.flat[k] = acc / len(dirs)
    return out


def variance_from_pair_measure(h: TestFunction, R: float, r_max: float = 9.0, panels: int = 36) -> float:
    """``V(R, h) = (1/pi) int h(x/R)^2 dA + int d(r) C(r) 2 pi r dr``.

    ``C`` is the shift-averaged autocorrelation of ``h(./R)``; ``d`` decays
    like ``exp(-r^2)`` times a polynomial, so ``r_max = 9`` loses nothing.
    """
    S = h.support_radius * R
    r_hi = min(r_max, 2 * S)
    r, w = _gl_panels(0.0, r_hi, panels, 16)
    C = autocorrelation(h, R, r)
    diag = float(autocorrelation(h, R, np.array([0.0]))[0])
    return DIAGONAL_ATOM * diag + float(np.sum(w * smooth_density(r) * C * 2 * math.pi * r))


# -- empirical pair statistics ------------------------------------------------------------


def disk_set_covariance(r, disk_radius: float) -> np.ndarray:
    """Area of ``D cap (D + v)`` for a disk ``D`` of the given radius and ``|v| = r``."""
    r = np.asarray(r, dtype=float)
    a = float(disk_radius)
    out = np.zeros(r.shape)
    m = r < 2 * a
    rm = r[m]
    out[m] = 2 * a * a * np.arccos(rm / (2 * a)) - 0.5 * rm * np.sqrt(4 * a * a - rm * rm)
    return out


def expected_pair_counts(edges, disk_radius: float) -> np.ndarray:
    """Expected ordered pair counts per distance bin for zeros in a disk.

    ``E #{(a, b): a != b in D, |a - b| in bin} = int_bin (1/pi^2 + d(r)) gamma_D(r) 2 pi r dr``.
    """
    edges = np.asarray(edges, dtype=float)
    out = np.empty(edges.size - 1)
    x, w = roots_legendre(24)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        r = 0.5 * (b - a) * x + 0.5 * (a + b)
        f = (1 / math.pi**2 + smooth_density(r)) * disk_set_covariance(r, disk_radius) * 2 * math.pi * r
        out[i] = 0.5 * (b - a) * float(w @ f)
    return out


def pair_distance_counts(zeros, edges, disk_radius: float, center: complex = 0.0) -> np.ndarray:
    """Ordered pair counts per bin for the zeros with ``|a - center| < disk_radius``."""
    z = np.asarray(zeros, dtype=complex)
    z = z[np.abs(z - center) < disk_radius]
    if z.size < 2:
        return np.zeros(len(edges) - 1)
    d = np.abs(z[:, None] - z[None, :])[np.triu_indices(z.size, 1)]
    return 2.0 * np.histogram(d, bins=edges)[0]
