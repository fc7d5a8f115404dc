"""Zero extraction for truncated GEF samples, validated by the argument principle.

Zeros are found cell by cell.  For a cell centred at ``c`` the translated
function ``(T_c F)(w) = F*(c + w) exp(|w|^2/2 - i Im(w conj c))`` is again a
GEF in law, so its Taylor coefficients at ``w = 0`` are O(1/sqrt(m!)) no
matter how far ``c`` is from the origin.  They are read off by an FFT on a
small circle, the local polynomials are solved by Aberth-Ehrlich iteration,
and every candidate is polished by Newton's method on the global series.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .gef import GefSample

CELL_SIDE = 3.0
FFT_RADIUS = 2.6
FFT_POINTS = 32
LOCAL_DEGREE = 24
# fallback pass: smaller cells, higher degree, no aliasing to speak of
FALLBACK = (CELL_SIDE / 1.5, 36, 64)
GUARD_FRACTION = 1e-3
EXTRACTION_GUARD = 1e-6
SEPARATION_FLOOR = 1e-9
DEFAULT_RESIDUAL_TOL = 1e-8


def _reach(radius: float) -> float:
    # cells cover room for guard-band nudges beyond the requested radius
    return radius * (1.0 + 20 * GUARD_FRACTION) + 0.05


def required_valid_radius(radius: float, center: complex = 0.0) -> float:
    """Valid radius a sample needs for :func:`find_zeros_disk` on this disk."""
    # the fallback pass uses smaller cells, so the first pass bounds the reach
    return abs(center) + _reach(radius) + CELL_SIDE / math.sqrt(2.0) + FFT_RADIUS + 1e-9


class ZeroFinderError(RuntimeError):
    """Base class for extraction failures."""


class IncompleteExtractionError(ZeroFinderError):
    """Found zeros disagree with the argument-principle count."""


class ContourError(ZeroFinderError):
    """Phase tracking on a circle could not be certified."""


class GuardBandError(ZeroFinderError):
    """A zero lies inside the guard band of an integration contour."""


class SupportError(ValueError):
    """Test-function support is not contained in the extraction disk."""


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Zeros of one sample inside ``|z - disk_center| < disk_radius``."""

    zeros: np.ndarray
    residuals: np.ndarray
    disk_center: complex
    disk_radius: float
    validated_count: int
    requested_radius: float = field(default=math.nan)

    def __len__(self) -> int:
        return len(self.zeros)

    def to_csv_rows(self, sample_index: int) -> list[tuple]:
        return [
            (sample_index, float(a.real), float(a.imag), float(r))
            for a, r in zip(self.zeros, self.residuals)
        ]


def zeroset_to_csv(zerosets, indices=None) -> str:
    """Serialize zero sets as ``sample_index,re,im,residual`` CSV."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["sample_index", "re", "im", "residual"])
    for j, zs in enumerate(zerosets):
        idx = j if indices is None else indices[j]
        for row in zs.to_csv_rows(idx):
            w.writerow([row[0]] + [repr(x) for x in row[1:]])
    return buf.getvalue()


# -- argument principle -------------------------------------------------------


def count_zeros_circle(
    s: GefSample,
    center: complex = 0.0,
    radius: float = 1.0,
    max_phase_step: float = math.pi / 3,
    max_nodes: int = 2_000_000,
) -> int:
    """Winding number of ``F`` along ``|z - center| = radius``.

    Phase increments between consecutive nodes are refined by bisection until
    every one is below ``max_phase_step``; the total is then an exact integer.
    Raises :class:`ContourError` when refinement cannot certify the count
    (a zero on or extremely close to the circle).
    """
    center = complex(center)
    if abs(center) + radius > s.valid_radius * (1 + 1e-12):
        raise ContourError("circle leaves the valid radius of the sample")
    n0 = 64 + 8 * int(math.ceil(radius * (abs(center) + radius)))
    theta = np.linspace(0.0, 2 * math.pi, n0 + 1)
    vals = s.star(center + radius * np.exp(1j * theta[:-1]))
    vals = np.append(vals, vals[0])
    for _ in range(60):
        if np.any(vals == 0):
            raise ContourError("F vanishes on the contour")
        dphi = np.angle(vals[1:] / vals[:-1])
        bad = np.nonzero(np.abs(dphi) > max_phase_step)[0]
        if bad.size == 0:
            total = float(np.sum(dphi)) / (2 * math.pi)
            n = int(round(total))
            if abs(total - n) > 1e-6:
                raise ContourError(f"non-integer winding {total}")
            return n
        if theta.size + bad.size > max_nodes:
            break
        mids = 0.5 * (theta[bad] + theta[bad + 1])
        if np.min(np.diff(theta)[bad]) < 1e-15:
            break
        mvals = s.star(center + radius * np.exp(1j * mids))
        theta = np.insert(theta, bad + 1, mids)
        vals = np.insert(vals, bad + 1, mvals)
    raise ContourError(
        f"could not certify phase increments on circle center={center}, radius={radius}"
    )


# -- local root finding -------------------------------------------------------


def _cell_centers(center: complex, radius: float, side: float) -> np.ndarray:
    n = int(math.ceil(radius / side + 0.5))
    g = (np.arange(-n, n + 1)) * side
    X, Y = np.meshgrid(g, g)
    c = (X + 1j * Y).ravel()
    # keep cells whose square meets the disk
    dx = np.maximum(np.abs(c.real) - side / 2, 0.0)
    dy = np.maximum(np.abs(c.imag) - side / 2, 0.0)
    keep = dx * dx + dy * dy <= radius * radius
    return center + c[keep]


def _local_candidates(s: GefSample, cells: np.ndarray, side: float, degree: int, M: int) -> np.ndarray:
    rho = FFT_RADIUS
    w = rho * np.exp(2j * np.pi * np.arange(M) / M)
    pts = cells[:, None] + w[None, :]
    vals = s.star(pts)
    # (T_c F)(w) = F*(c + w) exp(|w|^2/2 - i Im(w conj c))
    vals = vals * np.exp(0.5 * rho * rho - 1j * (w[None, :] * np.conj(cells[:, None])).imag)
    a = np.fft.fft(vals, axis=1) / M  # a[:, m] = coefficient_m * rho^m
    a = a[:, : degree + 1]
    u = _polynomial_roots(a)
    roots = cells[:, None] + rho * u
    half = 0.5 * side + 1e-3
    rel = roots - cells[:, None]
    inside = (np.abs(rel.real) <= half) & (np.abs(rel.imag) <= half) & np.isfinite(roots)
    return roots[inside]


def _polynomial_roots(a: np.ndarray) -> np.ndarray:
    """Roots of ``sum_m a[i, m] u**m`` for each row; Aberth with eigenvalue fallback."""
    npoly, deg1 = a.shape
    degree = deg1 - 1
    roots = np.empty((npoly, degree), dtype=complex)
    conv = np.zeros(npoly, dtype=bool)
    _kernels.aberth_batch(np.ascontiguousarray(a), 200, 1e-13, roots, conv)
    bad = np.nonzero(~conv)[0]
    if bad.size:
        comp = np.zeros((bad.size, degree, degree), dtype=complex)
        comp[:, np.arange(1, degree), np.arange(degree - 1)] = 1.0
        comp[:, 0, :] = -a[bad, degree - 1 :: -1][:, :degree] / a[bad, degree][:, None]
        roots[bad] = np.linalg.eigvals(comp)
    return roots


def newton_refine(s: GefSample, z: np.ndarray, max_iter: int = 30, tol: float = 1e-14):
    """Polish approximate zeros with Newton steps ``z -= F/F'`` (scaled values).

    Returns ``(z, converged_mask)``.
    """
    z = np.array(z, dtype=complex)
    active = np.ones(z.size, dtype=bool)
    converged = np.zeros(z.size, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        zi = z[idx]
        inside = np.abs(zi) < s.valid_radius
        f = np.zeros(idx.size, complex)
        d = np.ones(idx.size, complex)
        if np.any(inside):
            f[inside], d[inside] = s.star(zi[inside], derivative=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d != 0, f / d, 0.0)
        step = np.where(inside, step, 0.0)
        # damp wild steps from spurious candidates
        big = np.abs(step) > 0.5
        step[big] *= 0.5 / np.abs(step[big])
        z[idx] = zi - step
        small = np.abs(step) <= tol * np.maximum(1.0, np.abs(zi))
        done = small | ~inside
        converged[idx[small & inside]] = True
        active[idx[done]] = False
    return z, converged


def _dedupe(z: np.ndarray, tol: float) -> np.ndarray:
    if z.size < 2:
        return z
    pts = np.column_stack([z.real, z.imag])
    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    if pairs.size == 0:
        return z
    drop = np.zeros(z.size, dtype=bool)
    for i, j in sorted(map(tuple, pairs)):
        if not drop[i]:
            drop[j] = True
    return z[~drop]


def _clear_radius(mod: np.ndarray, radius: float, guard: float) -> float:
    """Smallest ``r >= radius`` with no modulus in ``[r - guard, r + guard]``."""
    mod = np.sort(mod[mod > radius - guard])
    r = radius
    for m in mod:
        if m < r - guard:
            continue
        if m > r + guard:
            break
        r = m + guard * (1.0 + 1e-9)
    return r


def find_zeros_disk(
    s: GefSample,
    center: complex = 0.0,
    radius: float = 1.0,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
    guard_band: float | None = None,
) -> ZeroSet:
    """All zeros of the sample inside the disk ``|z - center| < radius``.

    If a zero sits within ``guard_band`` of the boundary circle the radius is
    nudged outward until the band is clear; the returned ``disk_radius`` is
    the radius actually validated.  The number of zeros must equal the
    argument-principle count, otherwise :class:`IncompleteExtractionError`.
    """
    center = complex(center)
    if guard_band is None:
        guard_band = EXTRACTION_GUARD * max(radius, 1.0)
    reach = _reach(radius)
    if required_valid_radius(radius, center) > s.valid_radius * (1 + 1e-12):
        raise ZeroFinderError(
            f"disk (center {center}, radius {radius}) too large for valid radius {s.valid_radius}"
        )

    last_error = None
    for side, degree, M in ((CELL_SIDE, LOCAL_DEGREE, FFT_POINTS), FALLBACK):
        cells = _cell_centers(center, reach, side)
        cand = _local_candidates(s, cells, side, degree, M)
        z, ok = newton_refine(s, cand)
        z = z[ok & (np.abs(z - center) < reach)]
        z = _dedupe(z, 1e-7)
        r_eff = _clear_radius(np.abs(z - center), radius, guard_band)
        inside = np.abs(z - center) < r_eff
        zin = z[inside]
        count = count_zeros_circle(s, center, r_eff)
        if count != zin.size:
            last_error = IncompleteExtractionError(
                f"found {zin.size} zeros but argument principle gives {count} "
                f"(center {center}, radius {r_eff}, seed {s.seed})"
            )
            continue
        res = np.abs(s.star(zin)) if zin.size else np.zeros(0)
        if np.any(res > residual_tol):
            last_error = ZeroFinderError(f"residual {res.max():.3g} above tolerance")
            continue
        if zin.size > 1:
            dmin = cKDTree(np.column_stack([zin.real, zin.imag])).query(
                np.column_stack([zin.real, zin.imag]), k=2
            )[0][:, 1].min()
            if dmin <= SEPARATION_FLOOR:
                raise ZeroFinderError("zeros closer than the separation floor (multiple zero?)")
        order = np.lexsort((zin.imag, zin.real))
        return ZeroSet(zin[order], res[order], center, float(r_eff), int(count), float(radius))
    raise last_error


# -- circle averages and Jensen's formula -----------------------------------


def circle_log_average(
    s: GefSample,
    R: float,
    near_zeros=(),
    center: complex = 0.0,
    tol: float = 1e-10,
    n0: int | None = None,
    max_nodes: int = 1 << 20,
) -> float:
    """``(1/2pi) int log|F*(center + R e^{it})| dt`` by trapezoid doubling.

    Zeros listed in ``near_zeros`` are subtracted analytically through
    ``(1/2pi) int log|R e^{it} - a| dt = log max(R, |a|)`` so that the remaining
    integrand is smooth and the periodic trapezoid rule converges geometrically.
    """
    a = np.asarray(near_zeros, dtype=complex) - center
    base = float(np.sum(np.log(np.maximum(R, np.abs(a))))) if a.size else 0.0
    n = n0 or (64 + 16 * int(math.ceil(R * (abs(center) + R) ** 0.5 + R)))
    prev = None
    while n <= max_nodes:
        t = 2 * math.pi * np.arange(n) / n
        z = R * np.exp(1j * t)
        g = np.log(np.abs(s.star(center + z)))
        if a.size:
            g = g - np.sum(np.log(np.abs(z[:, None] - a[None, :])), axis=1)
        est = float(np.mean(g))
        if prev is not None and abs(est - prev) < tol:
            return est + base
        prev = est
        n *= 2
    raise ContourError("circle average did not converge")


def jensen_check(
    s: GefSample,
    R: float,
    zs: ZeroSet | None = None,
    guard_band: float | None = None,
    band: float = 0.5,
) -> float:
    """Discrepancy in Jensen's formula on ``|z| = R``.

    ``|(1/2pi) int log|F(Re^{it})| dt - log|F(0)| - sum_{|a|<R} log(R/|a|)|``.
    ``log|F| = log|F*| + |z|^2/2`` so the circle average carries ``R^2/2``.
    Raises :class:`GuardBandError` when a zero lies within the guard band of
    the circle.
    """
    if guard_band is None:
        guard_band = GUARD_FRACTION * R
    if zs is None:
        zs = find_zeros_disk(s, 0.0, R + band)
    elif zs.disk_radius < R + band or abs(zs.disk_center) != 0:
        raise ValueError("zero set must cover the disk of radius R + band around 0")
    z = zs.zeros
    mod = np.abs(z)
    if np.any(np.abs(mod - R) <= guard_band):
        raise GuardBandError(f"zero within guard band of |z|={R}")
    f0 = abs(s.coefficients[0])
    if f0 == 0:
        raise ZeroFinderError("F(0) = 0")
    near = z[np.abs(mod - R) < band]
    avg = circle_log_average(s, R, near) + 0.5 * R * R
    rhs = float(np.sum(np.log(R / mod[mod < R])))
    return abs(avg - math.log(f0) - rhs)


def jensen_check_nudged(s: GefSample, R: float, attempts: int = 10, **kw) -> tuple[float, float]:
    """Run :func:`jensen_check`, nudging ``R`` outward on guard-band hits.

    Returns ``(discrepancy, radius_used)``.
    """
    r = R
    for _ in range(attempts):
        try:
            return jensen_check(s, r, **kw), r
        except GuardBandError:
            r += 2 * GUARD_FRACTION * R
    raise GuardBandError(f"guard band still violated after {attempts} nudges from R={R}")


# -- linear statistics ---------------------------------------------------------


def linear_statistic(zs: ZeroSet, h, R: float) -> float:
    """``n(R, h) = sum_a h(a / R)`` over the zeros of the set.

    The support of ``h(./R)`` must lie inside the extraction disk.
    """
    support = R * h.support_radius
    if abs(zs.disk_center) + support > zs.disk_radius * (1 + 1e-12):
        raise SupportError(
            f"support radius {support} not contained in extraction disk of radius {zs.disk_radius}"
        )
    if len(zs) == 0:
        return 0.0
    return float(math.fsum(h.evaluate(zs.zeros / R)))
