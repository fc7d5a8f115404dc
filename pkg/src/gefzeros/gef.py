"""Truncated Gaussian entire function samples and overflow-safe evaluation.

The Gaussian entire function is ``F(z) = sum_k zeta_k z**k / sqrt(k!)`` with
i.i.d. standard complex Gaussian ``zeta_k`` (density ``exp(-|z|^2)/pi``).  All
evaluation goes through the normalized process ``F*(z) = exp(-|z|^2/2) F(z)``,
which has unit variance everywhere and never overflows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels

EULER_GAMMA = 0.57721566490153286061
#: ``b = E log|zeta| = -gamma/2`` for a standard complex Gaussian.
LOG_MODULUS_MEAN = -0.5 * EULER_GAMMA

# Terms of the normalized series below exp(TERM_CUTOFF) are dropped.  The
# coefficients are O(1) Gaussians, so the dropped mass is below 1e-16.
TERM_CUTOFF = -40.0


class GefError(ValueError):
    """Raised on invalid sample construction or out-of-radius evaluation."""


def log_tail(R: float, N: int) -> float:
    """Return ``log sum_{k>N} R**(2k)/k!`` evaluated in the log domain."""
    if R <= 0:
        return -math.inf
    two_log_r = 2.0 * math.log(R)
    # terms decay geometrically once k > R^2; sum a generous window
    k_max = max(N + 50, int(4 * R * R) + 100)
    k = np.arange(N + 1, k_max + 1, dtype=float)
    return float(logsumexp(k * two_log_r - gammaln(k + 1.0)))


def truncation_degree(R: float, tail_tol: float) -> int:
    """Least ``N`` with ``sum_{k>N} R^(2k)/k! <= tail_tol**2``.

    The bound is on the variance of the discarded tail of ``F`` at radius
    ``R``; it is monotone in ``N`` so a bracketing search is exact.
    """
    if not R > 0:
        raise GefError("radius must be positive")
    if not 0.0 < tail_tol < 1.0:
        raise GefError("tail tolerance must lie in (0, 1)")
    target = 2.0 * math.log(tail_tol)
    if not math.isfinite(target) or tail_tol < np.finfo(float).tiny:
        raise GefError("tail tolerance underflows double precision")
    lo = max(1, math.ceil(R * R))
    if log_tail(R, lo) <= target:
        return lo
    hi = lo
    while log_tail(R, hi) > target:
        hi = 2 * hi + 8
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if log_tail(R, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def sample_seed(master_seed: int, index: int) -> int:
    """64-bit per-sample seed derived from ``(master_seed, index)``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def standard_complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard complex Gaussians: independent N(0, 1/2) real and imaginary parts."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    xy = rng.standard_normal(shape + (2,))
    return (xy[..., 0] + 1j * xy[..., 1]) * math.sqrt(0.5)


@dataclass(frozen=True)
class PotentialValue:
    """``U = log|F*|`` at a point, its centered version and the phase of ``F*``.

    ``log_modulus_star`` is ``-inf`` (and ``is_zero`` is set) when ``F*``
    vanishes exactly at the evaluation point.
    """

    log_modulus_star: float
    centered: float
    phase: float

    @property
    def is_zero(self) -> bool:
        return self.log_modulus_star == -math.inf


@dataclass(frozen=True, eq=False)
class GefSample:
    """One truncated realization of the Gaussian entire function."""

    coefficients: np.ndarray
    truncation_degree: int
    seed: int
    valid_radius: float
    tail_tolerance: float
    _log_norm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        if c.shape != (self.truncation_degree + 1,):
            raise GefError("coefficient vector must have length N+1")
        k = np.arange(self.truncation_degree + 1, dtype=float)
        lognorm = -0.5 * gammaln(k + 1.0)
        lognorm.setflags(write=False)
        object.__setattr__(self, "_log_norm", lognorm)

    @property
    def degree(self) -> int:
        return self.truncation_degree

    def certified(self) -> bool:
        """Deterministic tail certificate at ``valid_radius``."""
        return log_tail(self.valid_radius, self.truncation_degree) <= 2.0 * math.log(
            self.tail_tolerance
        )

    # -- evaluation -------------------------------------------------------

    def _check_radius(self, z: np.ndarray) -> None:
        if z.size and np.max(np.abs(z)) > self.valid_radius * (1.0 + 1e-12):
            raise GefError(
                f"evaluation at |z|={np.max(np.abs(z)):.6g} outside valid radius "
                f"{self.valid_radius:.6g}"
            )

    def star(self, z, derivative: bool = False):
        """Evaluate ``F*(z) = exp(-|z|^2/2) F(z)`` on an array of points.

        With ``derivative=True`` also return ``exp(-|z|^2/2) F'(z)``, scaled by
        the same factor so that ``F/F'`` is available without overflow.
        """
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.ravel()
        self._check_radius(z)
        val, der = _kernels.evaluate(self.coefficients, self._log_norm, z, TERM_CUTOFF, derivative)
        if derivative:
            return val.reshape(shape), der.reshape(shape)
        return val.reshape(shape)

    def potential(self, z: complex) -> tuple[PotentialValue, complex]:
        """Return ``(PotentialValue, F*(z))`` at a single point."""
        v = complex(self.star(np.array([z]))[0])
        if v == 0:
            pv = PotentialValue(-math.inf, -math.inf, 0.0)
        else:
            lm = math.log(abs(v))
            pv = PotentialValue(lm, lm - LOG_MODULUS_MEAN, math.atan2(v.imag, v.real))
        return pv, v

    def log_modulus_star(self, z) -> np.ndarray:
        """``U(z) = log|F*(z)|``; exact zeros give ``-inf``."""
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.star(z)))

    def translate(self, kappa: complex, working_radius: float) -> "TranslatedGef":
        """Projective translation ``(T_kappa F)(z) = F(kappa+z) exp(-z conj(kappa) - |kappa|^2/2)``."""
        return TranslatedGef(self, complex(kappa), float(working_radius))

    # -- serialization ----------------------------------------------------

    def to_record(self) -> dict:
        return {
            "seed": int(self.seed),
            "N": int(self.truncation_degree),
            "valid_radius": float(self.valid_radius),
            "tail_tolerance": float(self.tail_tolerance),
            "coefficients": [[float(c.real), float(c.imag)] for c in self.coefficients],
        }

    @classmethod
    def from_record(cls, record: dict) -> "GefSample":
        coeffs = np.array([complex(re, im) for re, im in record["coefficients"]])
        return cls(
            coeffs,
            int(record["N"]),
            int(record["seed"]),
            float(record["valid_radius"]),
            float(record["tail_tolerance"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str) -> "GefSample":
        return cls.from_record(json.loads(text))


class TranslatedGef:
    """Evaluator for the projectively translated function ``T_kappa F``.

    Only evaluation through the normalized value is provided:
    ``(T_kappa F)(z) = F*(kappa + z) exp(|z|^2/2 - i Im(z conj(kappa)))``.
    """

    def __init__(self, sample: GefSample, kappa: complex, working_radius: float):
        if abs(kappa) + working_radius > sample.valid_radius * (1.0 + 1e-12):
            raise GefError("translation plus working radius exceeds the valid radius")
        self.sample = sample
        self.kappa = kappa
        self.working_radius = working_radius

    def _check(self, z):
        if z.size and np.max(np.abs(z)) > self.working_radius * (1.0 + 1e-12):
            raise GefError("evaluation outside the working radius")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        self._check(z)
        fs = self.sample.star(self.kappa + z)
        return fs * np.exp(0.5 * np.abs(z) ** 2 - 1j * (z * np.conj(self.kappa)).imag)

    def star(self, z):
        """``(T_kappa F)*(z)``; its modulus equals ``|F*(kappa + z)|``."""
        z = np.asarray(z, dtype=complex)
        self._check(z)
        return self.sample.star(self.kappa + z) * np.exp(-1j * (z * np.conj(self.kappa)).imag)


def sample_gef(seed: int, N: int | None = None, R_v: float = 10.0, tail_tol: float = 1e-12) -> GefSample:
    """Draw a truncated GEF from a Philox stream keyed by ``seed``.

    ``N`` defaults to the certified degree for ``(R_v, tail_tol)``; smaller
    values are rejected.  Coefficients are drawn sequentially, so the first
    ``k`` coefficients do not depend on ``N``.
    """
    need = truncation_degree(R_v, tail_tol)
    if N is None:
        N = need
    if N < need:
        raise GefError(f"degree {N} below certified degree {need} for R={R_v}, tol={tail_tol}")
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
    coeffs = standard_complex_normal(rng, N + 1)
    return GefSample(coeffs, int(N), int(seed), float(R_v), float(tail_tol))


def from_coefficients(coeffs, R_v: float, tail_tol: float = 1e-12, seed: int = 0) -> GefSample:
    """Wrap deterministic coefficients (zero-padded to the certified degree)."""
    need = truncation_degree(R_v, tail_tol)
    c = np.zeros(max(need, len(coeffs) - 1) + 1, dtype=complex)
    c[: len(coeffs)] = coeffs
    return GefSample(c, len(c) - 1, seed, float(R_v), float(tail_tol))


def covariance_kernel(z, w):
    """``E F(z) conj(F(w)) = exp(z conj(w))``."""
    return np.exp(np.asarray(z) * np.conj(w))


def log_covariance_kernel(z, w):
    """Log-domain form ``z conj(w)`` of :func:`covariance_kernel`."""
    return np.asarray(z) * np.conj(w)


def normalized_correlation(z, w):
    """``rho(z, w) = |E F*(z) conj(F*(w))| = exp(-|z-w|^2/2)``."""
    return np.exp(-0.5 * np.abs(np.asarray(z) - w) ** 2)
