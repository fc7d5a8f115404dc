"""Seeded Monte Carlo ensembles of zero statistics.

Sample ``i`` of an ensemble with master seed ``m`` is always drawn from the
Philox stream keyed by ``sample_seed(m, i)``, and results are stored by index,
so every ensemble is reproducible bit for bit whatever the thread count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import kolmogorov, ndtr

from .correlation import expected_pair_counts, pair_distance_counts
from .gef import LOG_MODULUS_MEAN, GefSample, sample_gef, sample_seed, standard_complex_normal
from .spectral import potential_variance_exact, variance_exact
from .test_functions import TestFunction, builtin
from .zeros import (
    ZeroFinderError,
    ZeroSet,
    circle_log_average,
    find_zeros_disk,
    linear_statistic,
    required_valid_radius,
)

log = logging.getLogger(__name__)

EXTRACTION_MARGIN = 0.5
MAX_FAILURE_FRACTION = 1e-3
MIN_KS_SAMPLES = 100
BOOTSTRAP_RESAMPLES = 1000


class EnsembleAbort(RuntimeError):
    """Too many samples failed zero extraction."""


def extraction_radius(h: TestFunction, R: float) -> float:
    return R * h.support_radius + EXTRACTION_MARGIN


# -- sample engine ----------------------------------------------------------------------

Statistic = Callable[[GefSample, ZeroSet], float]


def _one_sample(index, master_seed, radius, stats, tail_tol):
    s = sample_gef(sample_seed(master_seed, index), R_v=required_valid_radius(radius), tail_tol=tail_tol)
    try:
        zs = find_zeros_disk(s, 0.0, radius)
    except ZeroFinderError as exc:
        log.warning("sample %d (seed %d) aborted: %s", index, s.seed, exc)
        return None
    return [float(f(s, zs)) for f in stats]


def ensemble_values(
    stats: dict[str, Statistic],
    radius: float,
    n_samples: int,
    master_seed: int,
    threads: int = 1,
    tail_tol: float = 1e-12,
    start: int = 0,
) -> tuple[dict[str, np.ndarray], list[int]]:
    """Evaluate several per-sample statistics on one seeded ensemble.

    Each sample is drawn with a valid radius sufficient for extracting the
    zeros in ``|z| < radius``.  Failed samples are logged and dropped; more
    than ``0.1%`` failures raise :class:`EnsembleAbort`.
    """
    names = list(stats)
    funcs = [stats[k] for k in names]
    idx = range(start, start + n_samples)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda i: _one_sample(i, master_seed, radius, funcs, tail_tol), idx))
    else:
        rows = [_one_sample(i, master_seed, radius, funcs, tail_tol) for i in idx]
    failed = [i for i, r in zip(idx, rows) if r is None]
    if len(failed) > MAX_FAILURE_FRACTION * n_samples:
        raise EnsembleAbort(f"{len(failed)} of {n_samples} samples failed: {failed[:10]}")
    good = np.array([r for r in rows if r is not None], dtype=float).reshape(-1, len(names))
    return {k: good[:, j].copy() for j, k in enumerate(names)}, failed


# -- summaries ---------------------------------------------------------------------------


def online_moments(values) -> tuple[int, float, float, float, float]:
    """One-pass ``(n, mean, M2, M3, M4)`` by the Welford/Terriberry update."""
    n = 0
    mean = m2 = m3 = m4 = 0.0
    for x in values:
        n1 = n
        n += 1
        delta = float(x) - mean
        dn = delta / n
        dn2 = dn * dn
        t1 = delta * dn * n1
        mean += dn
        m4 += t1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * m2 - 4 * dn * m3
        m3 += t1 * dn * (n - 2) - 3 * dn * m2
        m2 += t1
    return n, mean, m2, m3, m4


def ks_normality(standardized) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test against N(0, 1).

    The p-value is the asymptotic Kolmogorov distribution with Stephens'
    finite-sample correction ``(sqrt(n) + 0.12 + 0.11/sqrt(n)) D``; it is
    accurate to a few percent for ``n >= 100``.
    """
    x = np.sort(np.asarray(standardized, dtype=float))
    n = x.size
    if n < MIN_KS_SAMPLES:
        raise ValueError(f"KS test needs at least {MIN_KS_SAMPLES} samples")
    cdf = ndtr(x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    sq = math.sqrt(n)
    return d, float(kolmogorov((sq + 0.12 + 0.11 / sq) * d))


def ks_two_sample_distance(a, b) -> float:
    """Sup distance between two empirical distribution functions."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def bootstrap_variance_se(values, n_boot: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> float:
    """Standard error of the sample variance from seeded bootstrap resamples."""
    x = np.asarray(values, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    return float(np.std(np.var(x[idx], axis=1, ddof=1), ddof=1))


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    statistic_name: str
    R: float
    n_samples: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    standardized_samples: np.ndarray
    ks_statistic: float
    ks_p_value: float
    master_seed: int
    values: np.ndarray = field(repr=False)
    mean_se: float = math.nan
    variance_se: float = math.nan
    reference_mean: Optional[float] = None
    reference_sigma: Optional[float] = None
    failed_indices: tuple = ()

    def to_dict(self, include_samples: bool = False) -> dict:
        d = {
            "statistic": self.statistic_name,
            "R": self.R,
            "n_samples": self.n_samples,
            "master_seed": self.master_seed,
            "mean": self.mean,
            "mean_se": self.mean_se,
            "variance": self.variance,
            "variance_se": self.variance_se,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "ks_statistic": self.ks_statistic,
            "ks_p_value": self.ks_p_value,
            "reference_mean": self.reference_mean,
            "reference_sigma": self.reference_sigma,
            "failed_indices": list(self.failed_indices),
        }
        if include_samples:
            d["values"] = [float(v) for v in self.values]
        return d


def summarize(
    values,
    name: str,
    R: float,
    master_seed: int,
    reference_mean: float | None = None,
    reference_sigma: float | None = None,
    failed=(),
) -> EnsembleSummary:
    """Moments, bootstrap SE and KS verdict for a vector of statistic values.

    ``standardized_samples`` use the empirical mean and standard deviation.
    The KS test uses ``reference_mean``/``reference_sigma`` (exact values)
    when given, so that it tests the shape against the predicted scale.
    """
    x = np.asarray(values, dtype=float)
    n, mean, m2, m3, m4 = online_moments(x)
    var = m2 / (n - 1)
    skew = math.sqrt(n) * m3 / m2**1.5 if m2 > 0 else math.nan
    kurt = n * m4 / (m2 * m2) - 3.0 if m2 > 0 else math.nan
    sd = math.sqrt(m2 / n)
    z = (x - mean) / sd if sd > 0 else np.zeros_like(x)
    mu = mean if reference_mean is None else reference_mean
    sig = sd if reference_sigma is None else reference_sigma
    ks_in = (x - mu) / sig if sig > 0 else np.zeros_like(x)
    d, p = ks_normality(ks_in) if n >= MIN_KS_SAMPLES else (math.nan, math.nan)
    return EnsembleSummary(
        statistic_name=name,
        R=float(R),
        n_samples=n,
        mean=mean,
        variance=var,
        skewness=skew,
        excess_kurtosis=kurt,
        standardized_samples=z,
        ks_statistic=d,
        ks_p_value=p,
        master_seed=int(master_seed),
        values=x,
        mean_se=math.sqrt(var / n),
        variance_se=bootstrap_variance_se(x, seed=master_seed) if n > 1 else math.nan,
        reference_mean=reference_mean,
        reference_sigma=reference_sigma,
        failed_indices=tuple(failed),
    )


def expected_linear_mean(h: TestFunction, R: float) -> float:
    """``E n(R, h) = (R^2 / pi) int h``."""
    return R * R / math.pi * float(h.fourier(np.array([0j]))[0].real)


def _check_nonzero(h: TestFunction) -> None:
    if (h.l2_norm is not None and h.l2_norm == 0) or h.name == "zero":
        raise ValueError("test function must not vanish identically")


def linear_statistic_fn(h: TestFunction, R: float) -> Statistic:
    return lambda s, zs: linear_statistic(zs, h, R)


def run_ensemble(
    h: TestFunction,
    R: float,
    n_samples: int,
    master_seed: int,
    threads: int = 1,
    exact_sigma: bool = True,
) -> EnsembleSummary:
    """Ensemble of ``n(R, h)`` over ``n_samples`` seeded GEF samples."""
    _check_nonzero(h)
    if n_samples < MIN_KS_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_KS_SAMPLES}")
    vals, failed = ensemble_values(
        {h.name: linear_statistic_fn(h, R)}, extraction_radius(h, R), n_samples, master_seed, threads
    )
    sigma = math.sqrt(variance_exact(h, R)) if exact_sigma else None
    return summarize(vals[h.name], h.name, R, master_seed, expected_linear_mean(h, R), sigma, failed)


def values_csv(values, start: int = 0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["sample_index", "value"])
    for i, v in enumerate(values):
        w.writerow([start + i, repr(float(v))])
    return buf.getvalue()


# -- probes --------------------------------------------------------------------------------

NORMALITY_P = 0.01
SKEW_GATE = 0.15
KURT_GATE = 0.3


def normality_verdict(summary: EnsembleSummary) -> bool:
    return (
        summary.ks_p_value > NORMALITY_P
        and abs(summary.skewness) < SKEW_GATE
        and abs(summary.excess_kurtosis) < KURT_GATE
    )


def sigma_slope(h: TestFunction, R_list) -> float:
    """Least-squares slope of ``log sigma(R, h)`` against ``log R`` (exact variances)."""
    R = np.asarray(R_list, dtype=float)
    s = np.array([0.5 * math.log(variance_exact(h, r)) for r in R])
    return float(np.polyfit(np.log(R), s, 1)[0])


def clt_probe(h: TestFunction, R_list, n_samples: int, seed: int, threads: int = 1) -> list[dict]:
    """Normality diagnostics for ``n(R, h)`` across radii.

    Each row carries the KS p-value, skewness and excess kurtosis, the
    verdict under the default gates, and ``R^alpha sigma(R, h)`` for the
    Holder exponent of ``h`` (exact sigma).
    """
    rows = []
    for R in R_list:
        summ = run_ensemble(h, R, n_samples, seed, threads)
        a = h.holder_exponent
        diag = None if a is None or not math.isfinite(a) else R**a * summ.reference_sigma
        rows.append(
            {
                "R": float(R),
                "summary": summ,
                "variance_exact": summ.reference_sigma**2,
                "ks_p_value": summ.ks_p_value,
                "skewness": summ.skewness,
                "excess_kurtosis": summ.excess_kurtosis,
                "r_alpha_sigma": diag,
                "normal": normality_verdict(summ),
            }
        )
    return rows


def abnormal_probe(alpha: float, R_list, n_samples: int, seed: int, threads: int = 1) -> list[dict]:
    """Monte Carlo ``R^alpha sigma_MC`` and non-normality evidence for ``h_alpha``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    h = builtin("abnormal", alpha=alpha)
    rows = []
    for R in R_list:
        summ = run_ensemble(h, R, n_samples, seed, threads)
        rows.append(
            {
                "R": float(R),
                "summary": summ,
                "r_alpha_sigma_mc": R**alpha * math.sqrt(summ.variance),
                "r_alpha_sigma_exact": R**alpha * summ.reference_sigma,
                "ks_p_value": summ.ks_p_value,
                "excess_kurtosis": summ.excess_kurtosis,
                "skewness": summ.skewness,
                "rejects_normality": summ.ks_p_value < NORMALITY_P,
            }
        )
    return rows


def circle_term_variance_exact(R: float, tol: float = 1e-15) -> float:
    """``Var((1/2pi) int log|F*(R e^{it})| dt) = (1/4) sum_a a^-2 e^{-2aR^2} I_0(2aR^2)``.

    The terms behave like ``a^-5/2 / (4 sqrt(pi) R)``; the tail beyond ``K``
    terms is replaced by its integral bound, which needs ``K R^2 >> 1``
    (accurate for ``R >= 0.5``).
    """
    from scipy.special import i0e

    K = 20000
    a = np.arange(1, K + 1, dtype=float)
    head = float(np.sum(i0e(2 * a * R * R) / a**2))
    tail = 1.0 / (2.0 * math.sqrt(math.pi) * R) * (2.0 / 3.0) * (K + 0.5) ** -1.5
    return 0.25 * (head + tail)


def log_minus_statistics(R: float):
    """Per-sample statistics for the log-minus example at radius ``R``.

    Returns functions for ``n(R, log^-)``, the circle term
    ``(1/2pi) int l(F*(R e^{it})) dt`` with ``l = log|.| - b``, the point term
    ``l(F*(0))`` and the discrepancy of the identity
    ``n - R^2/2 = circle - point``.
    """
    h = builtin("log_minus")
    band = 0.5

    def circle(s, zs):
        near = zs.zeros[np.abs(np.abs(zs.zeros) - R) < band]
        return circle_log_average(s, R, near) - LOG_MODULUS_MEAN

    def point(s, zs):
        return math.log(abs(s.coefficients[0])) - LOG_MODULUS_MEAN

    def count(s, zs):
        return linear_statistic(zs, h, R)

    def discrepancy(s, zs):
        return abs((count(s, zs) - 0.5 * R * R) - (circle(s, zs) - point(s, zs)))

    return {"n": count, "circle": circle, "point": point, "identity_error": discrepancy}


def reference_log_modulus(n: int, seed: int) -> np.ndarray:
    """Sample of ``-(log|zeta| - b)`` for standard complex Gaussians ``zeta``."""
    rng = np.random.Generator(np.random.Philox(seed))
    z = standard_complex_normal(rng, n)
    return -(np.log(np.abs(z)) - LOG_MODULUS_MEAN)


def log_minus_probe(R_list, n_samples: int, seed: int, threads: int = 1, reference_size: int = 100_000) -> dict:
    """Mean, circle-term variance decay and limiting law for ``h = log^-``."""
    rows = []
    last = None
    for R in R_list:
        vals, failed = ensemble_values(log_minus_statistics(R), R + EXTRACTION_MARGIN, n_samples, seed, threads)
        n = vals["n"]
        c = vals["circle"]
        rows.append(
            {
                "R": float(R),
                "mean": float(np.mean(n)),
                "mean_se": float(np.std(n, ddof=1) / math.sqrt(n.size)),
                "expected_mean": 0.5 * R * R,
                "circle_variance": float(np.var(c, ddof=1)),
                "circle_variance_exact": circle_term_variance_exact(R),
                "max_identity_error": float(np.max(vals["identity_error"])),
                "failed": failed,
            }
        )
        last = vals
    Rs = np.array([r["R"] for r in rows])
    cv = np.array([r["circle_variance"] for r in rows])
    slope = float(np.polyfit(np.log(Rs), np.log(cv), 1)[0]) if len(rows) > 1 else math.nan
    nbar = last["n"] - 0.5 * R_list[-1] ** 2
    ref = reference_log_modulus(reference_size, seed + 1)
    zs = (nbar - nbar.mean()) / nbar.std()
    zr = (ref - ref.mean()) / ref.std()
    return {"rows": rows, "circle_variance_exponent": slope, "ks_distance": ks_two_sample_distance(zs, zr)}


def correlated_gaussian_covariance_probe(rho: float, n_samples: int, seed: int) -> tuple[float, float]:
    """Empirical ``Cov(log|z1|, log|z2|)`` for ``|E z1 conj(z2)| = rho``; returns ``(estimate, se)``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    rng = np.random.Generator(np.random.Philox(seed))
    z1 = standard_complex_normal(rng, n_samples)
    eta = standard_complex_normal(rng, n_samples)
    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * eta
    x = np.log(np.abs(z1))
    y = np.log(np.abs(z2))
    prod = (x - x.mean()) * (y - y.mean())
    est = float(np.sum(prod) / (n_samples - 1))
    se = float(np.std(prod, ddof=1) / math.sqrt(n_samples))
    return est, se


def gamma_moment_probe(t: float, n_samples: int, seed: int) -> tuple[float, float, float]:
    """Empirical ``E|zeta|^t``, its SE and the exact ``Gamma(t/2 + 1)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    rng = np.random.Generator(np.random.Philox(seed))
    v = np.abs(standard_complex_normal(rng, n_samples)) ** t
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_samples)), float(gamma_fn(0.5 * t + 1.0))


# -- potential integrals -------------------------------------------------------------------


def unit_disk_potential(s: GefSample, zs: ZeroSet) -> float:
    """``int_{|x|<1} log|F*(x)| dA`` from the zeros in the unit disk.

    ``log|F| - sum_{|a|<1} log|x - a|`` is harmonic on the closed disk, and
    ``int_{|x|<1} log|x - a| dA = pi (|a|^2 - 1) / 2``, so

        int U = pi log|F(0)| - pi/4 + pi sum_{|a|<1} ((|a|^2 - 1)/2 - log|a|).
    """
    if zs.disk_radius < 1.0 or abs(zs.disk_center) != 0:
        raise ValueError("zero set must cover the unit disk")
    a = np.abs(zs.zeros[np.abs(zs.zeros) < 1.0])
    corr = math.fsum(0.5 * (a * a - 1.0) - np.log(a)) if a.size else 0.0
    return math.pi * (math.log(abs(s.coefficients[0])) - 0.25 + corr)


def potential_probe(n_samples: int, seed: int, threads: int = 1) -> dict:
    """MC variance of ``int_{|x|<1} U dA`` against the spectral formula."""
    vals, failed = ensemble_values({"U": unit_disk_potential}, 1.0 + EXTRACTION_MARGIN, n_samples, seed, threads)
    x = vals["U"]
    exact = potential_variance_exact(builtin("indicator"))
    return {
        "mc_variance": float(np.var(x, ddof=1)),
        "bootstrap_se": bootstrap_variance_se(x, seed=seed),
        "exact": exact,
        "mean": float(np.mean(x)),
        "failed": failed,
    }


# -- pair statistics -------------------------------------------------------------------------


def pair_histogram_stat(edges, disk_radius: float):
    """Per-sample statistic factories returning ordered pair counts for each bin."""
    return {
        f"pairs_{k}": (lambda s, zs, k=k: pair_distance_counts(zs.zeros, edges, disk_radius)[k])
        for k in range(len(edges) - 1)
    }


def pair_histogram_check(values: dict, edges, disk_radius: float) -> list[dict]:
    """Compare mean pair counts per bin with ``int (1/pi^2 + d) gamma_D 2 pi r dr``."""
    exp = expected_pair_counts(edges, disk_radius)
    rows = []
    for k in range(len(edges) - 1):
        v = values[f"pairs_{k}"]
        se = float(np.std(v, ddof=1) / math.sqrt(v.size))
        rows.append(
            {
                "lo": float(edges[k]),
                "hi": float(edges[k + 1]),
                "mean": float(v.mean()),
                "se": se,
                "expected": float(exp[k]),
                "z": float((v.mean() - exp[k]) / se) if se > 0 else math.inf,
            }
        )
    return rows
