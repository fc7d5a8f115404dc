"""Spectral variance of linear statistics and of potential integrals.

``Var n(R, h) = R^2 int |hat h(lam)|^2 M(lam / R) dA(lam)`` with

    M(mu) = pi^3 |mu|^4 S(pi^2 |mu|^2),   S(x) = sum_{a >= 1} a^-3 exp(-x / a).

``S(x) x^2 -> 1`` so ``M -> 1/pi``; the approach is faster than any power
(``|1 - x^2 S(x)| < 1e-27`` for ``x >= 400``), so beyond that point ``M`` is
replaced by ``1/pi`` and the remaining frequency mass is taken from
Plancherel, ``int |hat h|^2 = ||h||_2^2``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import factorial, roots_legendre
from scipy.special import zeta as hurwitz_zeta

from .test_functions import TestFunction, default_cutoff

# x = pi^2 |mu|^2 beyond which S(x) = 1/x^2 to double precision
X_SWITCH = 400.0
MU_SWITCH = math.sqrt(X_SWITCH) / math.pi
_DIRECT_TERMS = int(2 * X_SWITCH)


class VarianceToleranceError(RuntimeError):
    def __init__(self, achieved: float, target: float):
        super().__init__(f"relative quadrature error {achieved:.3g} exceeds target {target:.3g}")
        self.achieved = achieved
        self.target = target


# -- zeta constants ---------------------------------------------------------------


def zeta_richardson(s: float, n0: int = 64, levels: int = 7) -> float:
    """``zeta(s)`` for ``s > 1`` from partial sums with Richardson extrapolation.

    The partial sum error ``zeta(s) - S_N`` expands in powers
    ``N^(1-s), N^-s, N^(-s-1), N^(-s-3), ...``; partial sums at
    ``N = n0 2^k`` are combined to cancel the leading ``levels`` of them.
    """
    if not s > 1:
        raise ValueError("s must exceed 1")
    exps = [s - 1.0, s, s + 1.0] + [s + 1.0 + 2 * j for j in range(1, levels)]
    exps = exps[:levels]
    ns = [n0 * 2**k for k in range(levels + 1)]
    terms = np.arange(1, ns[-1] + 1, dtype=float) ** (-s)
    # fsum of reversed terms keeps the partial sums accurate
    table = [math.fsum(terms[:n][::-1]) for n in ns]
    for p in exps:
        f = 2.0**p
        table = [(f * table[i + 1] - table[i]) / (f - 1.0) for i in range(len(table) - 1)]
    return table[0]


ZETA_2 = math.pi**2 / 6
ZETA_3 = zeta_richardson(3.0)
ZETA_3_2 = zeta_richardson(1.5)
#: ``zeta(3)/(16 pi)``, coefficient of the smooth asymptotics
SMOOTH_COEFFICIENT = ZETA_3 / (16 * math.pi)
#: ``zeta(3/2)/(8 pi^(3/2))``, coefficient of the boundary asymptotics
BOUNDARY_COEFFICIENT = ZETA_3_2 / (8 * math.pi**1.5)
#: ``(pi/4) zeta(3)``: supremum of the potential multiplier (attained at lam -> 0)
POTENTIAL_BOUND = 0.25 * math.pi * ZETA_3


# -- spectral density ---------------------------------------------------------------

_HURWITZ_TERMS = 40
_HZ = np.array([hurwitz_zeta(3.0 + j, _DIRECT_TERMS + 1.0) for j in range(_HURWITZ_TERMS)])
_INV_FACT = 1.0 / factorial(np.arange(_HURWITZ_TERMS), exact=False)


def series_S(x, tol: float = 1e-16) -> np.ndarray:
    """``S(x) = sum_{a>=1} a^-3 exp(-x/a)`` for ``x >= 0`` (vectorized).

    For ``x < X_SWITCH`` the first ``2 X_SWITCH`` terms are summed directly
    and the rest expanded as ``sum_j (-x)^j / j! zeta(3 + j, K + 1)``; since
    ``x/K < 1/2`` the expansion converges geometrically.  For larger ``x`` the
    value ``1/x^2`` is exact to double precision.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    flat = x.ravel()
    out = np.empty(flat.size)
    big = flat >= X_SWITCH
    out[big] = 1.0 / flat[big] ** 2
    idx = np.nonzero(~big)[0]
    a = np.arange(1, _DIRECT_TERMS + 1, dtype=float)
    inv_a = 1.0 / a
    w = a**-3.0
    step = 2048
    for i in range(0, idx.size, step):
        xs = flat[idx[i : i + step]]
        direct = np.exp(-np.outer(xs, inv_a)) @ w
        # tail in powers of -x; terms decay like (x/K)^j / j!
        powers = (-xs[:, None]) ** np.arange(_HURWITZ_TERMS)[None, :]
        tail = powers @ (_INV_FACT * _HZ)
        out[idx[i : i + step]] = direct + tail
    return out.reshape(x.shape)


def spectral_density_M(lam_mag, tol: float = 1e-15) -> np.ndarray:
    """``M(lam) = pi^3 |lam|^4 sum_a a^-3 exp(-pi^2 |lam|^2 / a)``."""
    mu = np.abs(np.asarray(lam_mag, dtype=float))
    x = math.pi**2 * mu * mu
    out = np.empty(mu.shape)
    big = x >= X_SWITCH
    out[big] = 1.0 / math.pi
    small = ~big
    out[small] = math.pi**3 * mu[small] ** 4 * series_S(x[small], tol)
    return out if out.ndim else float(out)


def spectral_density_M_direct(lam_mag: float, terms: int = 200_000) -> float:
    """Plain partial sum of the defining series (oracle for moderate ``|lam|``)."""
    x = math.pi**2 * lam_mag * lam_mag
    a = np.arange(1, terms + 1, dtype=float)
    vals = a**-3.0 * np.exp(-x / a)
    return math.pi**3 * lam_mag**4 * math.fsum(vals[::-1])


def ratio_to_min(lam_mag) -> np.ndarray:
    """``M(lam) / min(|lam|^4, 1)``."""
    mu = np.asarray(lam_mag, dtype=float)
    return spectral_density_M(mu) / np.minimum(mu**4, 1.0)


#: Comparability constants ``c <= M(lam)/min(|lam|^4,1) <= C``.  The ratio is
#: decreasing in ``|lam|`` on ``(0, 1]`` and equals ``M`` beyond, so ``C`` is the
#: ``lam -> 0`` limit ``pi^3 zeta(3)`` and ``c = M(1)``.
RATIO_UPPER = math.pi**3 * ZETA_3
RATIO_LOWER = float(spectral_density_M(1.0))


def _m_sup() -> float:
    # M overshoots 1/pi, with its global maximum near |lam| = 0.59
    grid = np.linspace(1e-3, MU_SWITCH, 20001)
    m0 = grid[np.argmax(spectral_density_M(grid))]
    res = minimize_scalar(
        lambda m: -spectral_density_M(m), bounds=(m0 - 1e-3, m0 + 1e-3), method="bounded",
        options={"xatol": 1e-12},
    )
    return -float(res.fun)


#: ``sup M`` (about ``1.039/pi``)
M_SUP = _m_sup()


# -- radial frequency integrals ------------------------------------------------------

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = roots_legendre(n)
    return _GL_CACHE[n]


def _panel_nodes(breaks, width: float, n: int):
    """Composite Gauss-Legendre nodes on consecutive intervals of ``breaks``."""
    xg, wg = _gl(n)
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        m = max(1, int(math.ceil((b - a) / width)))
        edges = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs.append((mid[:, None] + half[:, None] * xg[None, :]).ravel())
        ws.append((half[:, None] * wg[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def _abs2_radial_or_angular(h: TestFunction, rho: np.ndarray, n_theta: int = 64) -> np.ndarray:
    """Angular mean of ``|hat h|^2`` on circles ``|lam| = rho``."""
    if h.is_radial:
        return h.fourier_abs(rho) ** 2
    t = 2 * math.pi * np.arange(n_theta) / n_theta
    lam = rho[:, None] * np.exp(1j * t)[None, :]
    return np.mean(np.abs(h.fourier(lam)) ** 2, axis=1)


def _l2_squared(h: TestFunction) -> float:
    if h.l2_norm is not None:
        return h.l2_norm**2
    if h.is_radial:
        x, w = _panel_nodes([0.0, h.support_radius], h.support_radius / 64, 32)
        return float(2 * math.pi * np.sum(w * x * h.profile(x) ** 2))
    raise ValueError(f"L2 norm of {h.name} unknown")


def _weighted_integral(h: TestFunction, weight, rho_max: float, breaks, width: float, n: int):
    """``int_{|lam| < rho_max} |hat h|^2 weight(|lam|) dA``."""
    bks = sorted({0.0, rho_max, *[b for b in breaks if 0 < b < rho_max]})
    x, w = _panel_nodes(bks, width, n)
    f = _abs2_radial_or_angular(h, x)
    return float(2 * math.pi * np.sum(w * x * f * weight(x)))


def _variance_once(h: TestFunction, R: float, n: int, width_scale: float = 1.0) -> float:
    lam_max = MU_SWITCH * R
    width = width_scale * min(0.25, lam_max / 64)
    core = _weighted_integral(h, lambda r: spectral_density_M(r / R), lam_max, [R], width, n)
    mass = _weighted_integral(h, lambda r: np.ones_like(r), lam_max, [R], width, n)
    tail = max(_l2_squared(h) - mass, 0.0) / math.pi
    return R * R * (core + tail)


def variance_exact(h: TestFunction, R: float, tol: float = 1e-8, return_error: bool = False):
    """``V(R, h) = R^2 int |hat h(lam)|^2 M(lam / R) dA(lam)``.

    Composite Gauss-Legendre in ``|lam|`` split at ``|lam| = R`` (angular
    trapezoid for non-radial ``h``); above ``|lam| = MU_SWITCH R`` the density
    is constant and the tail follows from ``||h||_2``.  The error estimate is
    the change between 16- and 24-point panels; exceeding ``tol`` (relative)
    raises :class:`VarianceToleranceError`.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    v1 = _variance_once(h, R, 16)
    v2 = _variance_once(h, R, 24)
    err = abs(v2 - v1) / max(abs(v2), 1e-300)
    if err > tol:
        raise VarianceToleranceError(err, tol)
    return (v2, err) if return_error else v2


def two_sided_integral(h: TestFunction, R: float) -> float:
    """``R^-2 int_{|lam|<=R} |hat h|^2 |lam|^4 + R^2 int_{|lam|>=R} |hat h|^2``."""
    width = min(0.25, R / 64)
    low = _weighted_integral(h, lambda r: r**4, R, [], width, 24) / (R * R)
    below = _weighted_integral(h, lambda r: np.ones_like(r), R, [], width, 24)
    high = R * R * max(_l2_squared(h) - below, 0.0)
    return low + high


def variance_two_sided(h: TestFunction, R: float) -> tuple[float, float]:
    """Comparability bounds ``(c I, C I)`` with ``I`` from :func:`two_sided_integral`.

    ``c`` and ``C`` bound ``M / min(|lam|^4, 1)`` pointwise, so the pair
    brackets :func:`variance_exact` for every ``h``.
    """
    I = two_sided_integral(h, R)
    return RATIO_LOWER * I, RATIO_UPPER * I


def l2_bound(h: TestFunction, R: float) -> float:
    """``V(R, h) <= sup M R^2 ||h||_2^2``."""
    return M_SUP * R * R * _l2_squared(h)


def laplacian_l2_squared(h: TestFunction) -> float:
    """``||Delta h||_2^2``; from metadata, else ``int 16 pi^4 |lam|^4 |hat h|^2``."""
    if h.laplacian_l2_norm is not None:
        return h.laplacian_l2_norm**2
    if h.laplacian_fn is None:
        raise ValueError(f"{h.name} has no Laplacian in L2")
    rho_max = 40.0
    return 16 * math.pi**4 * _weighted_integral(h, lambda r: r**4, rho_max, [], 0.05, 24)


def smooth_bound(h: TestFunction, R: float) -> float:
    """``V(R, h) <= zeta(3) ||Delta h||^2 / (16 pi R^2)`` (from ``M <= C |lam|^4``)."""
    return SMOOTH_COEFFICIENT * laplacian_l2_squared(h) / (R * R)


def asymptotic_smooth(h: TestFunction, R: float) -> float:
    """``zeta(3) ||Delta h||_2^2 / (16 pi R^2)``."""
    if h.laplacian_fn is None and h.laplacian_l2_norm is None:
        raise ValueError(f"{h.name} is not C^2")
    lap = laplacian_l2_squared(h)
    if not lap > 0:
        raise ValueError("Delta h vanishes identically")
    return SMOOTH_COEFFICIENT * lap / (R * R)


def asymptotic_indicator(perimeter: float, R: float) -> float:
    """``zeta(3/2) R L / (8 pi^(3/2))`` for the indicator of a domain with perimeter ``L``."""
    return BOUNDARY_COEFFICIENT * R * perimeter


def low_frequency_laplacian_l2_squared(h: TestFunction, R: float, chi: TestFunction | None = None) -> float:
    """``||Delta(h * chi_R)||_2^2 = int 16 pi^4 |lam|^4 |hat h|^2 |hat chi(lam/R)|^2``."""
    chi = chi or default_cutoff()
    rho_max = 12.0 * R / chi.support_radius
    width = min(0.25, rho_max / 256)
    return 16 * math.pi**4 * _weighted_integral(
        h, lambda r: r**4 * chi.fourier_abs(r / R) ** 2, rho_max, [R], width, 24
    )


def cutoff_lower_constant(chi: TestFunction | None = None) -> float:
    """``inf_mu M(mu) / (16 pi^4 |mu|^4 hat chi(mu)^2)`` over a fine grid.

    With this ``c``, ``V(R, h) >= c R^-2 ||Delta(h * chi_R)||^2`` for every ``h``.
    """
    chi = chi or default_cutoff()
    mu = np.geomspace(1e-3, 12.0, 4000)
    den = 16 * math.pi**4 * mu**4 * chi.fourier_abs(mu) ** 2
    with np.errstate(divide="ignore"):
        ratio = np.where(den > 0, spectral_density_M(mu) / den, np.inf)
    return float(ratio.min())


# -- potential integrals ----------------------------------------------------------------


def potential_multiplier(lam_mag) -> np.ndarray:
    """``(pi/4) S(pi^2 |lam|^2)``; ``Var int g U = int |hat g|^2 (this) dA``."""
    mu = np.asarray(lam_mag, dtype=float)
    return 0.25 * math.pi * series_S(math.pi**2 * mu * mu)


def potential_variance_exact(g: TestFunction, tol: float = 1e-8, rho_max: float = 60.0) -> float:
    """``Var(int g U dA) = (pi/4) int |hat g|^2 sum_a a^-3 exp(-pi^2|lam|^2/a) dA``.

    The integral is truncated at ``rho_max``; the neglected part is at most
    ``||g||^2 / (4 pi^3 rho_max^4)`` relative to ``||g||^2``.
    """
    width = 0.05
    v1 = _weighted_integral(g, potential_multiplier, rho_max, [1.0, 5.0], width, 16)
    v2 = _weighted_integral(g, potential_multiplier, rho_max, [1.0, 5.0], width, 24)
    err = abs(v2 - v1) / max(abs(v2), 1e-300)
    if err > tol:
        raise VarianceToleranceError(err, tol)
    return v2


def potential_bound(g: TestFunction) -> float:
    """``(pi/4) zeta(3) ||g||_2^2``."""
    return POTENTIAL_BOUND * _l2_squared(g)


# -- reports -------------------------------------------------------------------------------

REPORT_COLUMNS = ("name", "R", "exact", "lower", "upper", "asymptotic", "mc", "mc_se")


@dataclass(frozen=True)
class VarianceReport:
    test_function: str
    R: float
    exact: float
    lower_bound: float
    upper_bound: float
    asymptotic_prediction: Optional[float] = None
    mc_estimate: Optional[float] = None
    mc_standard_error: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_row(self) -> list:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [
            self.test_function,
            repr(float(self.R)),
            fmt(self.exact),
            fmt(self.lower_bound),
            fmt(self.upper_bound),
            fmt(self.asymptotic_prediction),
            fmt(self.mc_estimate),
            fmt(self.mc_standard_error),
        ]


def variance_report(h: TestFunction, R: float, perimeter: float | None = None, mc=None) -> VarianceReport:
    """Exact variance, two-sided bounds and the applicable asymptotic prediction.

    ``perimeter`` selects the boundary asymptotics (indicators); otherwise
    the smooth asymptotics is used when ``h`` has a Laplacian.  ``mc`` is an
    optional ``(estimate, standard_error)`` pair.
    """
    exact = variance_exact(h, R)
    lo, hi = variance_two_sided(h, R)
    if perimeter is not None:
        asym = asymptotic_indicator(perimeter, R)
    elif h.laplacian_fn is not None or h.laplacian_l2_norm is not None:
        asym = asymptotic_smooth(h, R)
    else:
        asym = None
    est, se = (None, None) if mc is None else (float(mc[0]), float(mc[1]))
    return VarianceReport(h.name, float(R), exact, lo, hi, asym, est, se)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()
