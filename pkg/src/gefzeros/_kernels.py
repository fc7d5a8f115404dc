"""Compiled inner loops for evaluating the normalized series."""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def star_eval(coeffs, log_norm, sqrt_k, z, cutoff, want_derivative, out_val, out_der):
    """Sum ``zeta_k t_k(z)`` with ``t_k = z^k/sqrt(k!) exp(-|z|^2/2)``.

    Each point is summed outward from its peak term ``k ~ |z|^2`` using the
    ratio recurrences ``t_{k+1} = t_k z/sqrt(k+1)`` and
    ``t_{k-1} = t_k sqrt(k)/z``; terms below ``exp(cutoff)`` end the walk.
    The derivative output is ``exp(-|z|^2/2) F'(z) = sum zeta_{k+1} sqrt(k+1) t_k``.
    """
    N = coeffs.shape[0] - 1
    thresh2 = math.exp(2.0 * cutoff)
    for i in range(z.shape[0]):
        w = z[i]
        r = abs(w)
        if r == 0.0:
            out_val[i] = coeffs[0]
            if want_derivative:
                out_der[i] = coeffs[1] if N >= 1 else 0.0
            continue
        r2 = r * r
        kp = int(r2)
        if kp > N:
            kp = N
        mag = math.exp(kp * math.log(r) + log_norm[kp] - 0.5 * r2)
        # (w/r)^kp via the angle, not repeated products
        ang = math.atan2(w.imag, w.real) * kp
        t_peak = mag * complex(math.cos(ang), math.sin(ang))
        wr, wi = w.real, w.imag
        # upward walk
        tr, ti = t_peak.real, t_peak.imag
        ar = 0.0
        ai = 0.0
        dr = 0.0
        di = 0.0
        k = kp
        while True:
            c = coeffs[k]
            ar += c.real * tr - c.imag * ti
            ai += c.real * ti + c.imag * tr
            if want_derivative and k < N:
                c1 = coeffs[k + 1] * sqrt_k[k + 1]
                dr += c1.real * tr - c1.imag * ti
                di += c1.real * ti + c1.imag * tr
            if k >= N:
                break
            s = 1.0 / sqrt_k[k + 1]
            nr = (tr * wr - ti * wi) * s
            ti = (tr * wi + ti * wr) * s
            tr = nr
            k += 1
            if k > r2 and tr * tr + ti * ti < thresh2:
                break
        # downward walk: t_{k-1} = t_k sqrt(k) conj(w) / |w|^2
        tr, ti = t_peak.real, t_peak.imag
        k = kp
        while k > 0:
            s = sqrt_k[k] / r2
            nr = (tr * wr + ti * wi) * s
            ti = (ti * wr - tr * wi) * s
            tr = nr
            k -= 1
            c = coeffs[k]
            ar += c.real * tr - c.imag * ti
            ai += c.real * ti + c.imag * tr
            if want_derivative:
                c1 = coeffs[k + 1] * sqrt_k[k + 1]
                dr += c1.real * tr - c1.imag * ti
                di += c1.real * ti + c1.imag * tr
            if tr * tr + ti * ti < thresh2:
                break
        out_val[i] = complex(ar, ai)
        if want_derivative:
            out_der[i] = complex(dr, di)


def evaluate(coeffs, log_norm, z, cutoff, derivative=False):
    z = np.ascontiguousarray(z, dtype=np.complex128)
    sqrt_k = np.sqrt(np.arange(coeffs.shape[0] + 1, dtype=np.float64))
    val = np.empty(z.shape[0], dtype=np.complex128)
    der = np.empty(z.shape[0] if derivative else 1, dtype=np.complex128)
    star_eval(coeffs, log_norm, sqrt_k, z, float(cutoff), bool(derivative), val, der)
    return val, (der if derivative else None)


@njit(cache=True, nogil=True)
def aberth_batch(coeffs, max_iter, tol, roots, converged):
    """Aberth-Ehrlich iteration for many polynomials of equal degree.

    ``coeffs[i, m]`` is the coefficient of ``u**m`` of polynomial ``i``.
    Initial guesses sit on a circle of the Cauchy-bound radius, slightly
    rotated to avoid symmetric stagnation.
    """
    npoly, deg1 = coeffs.shape
    d = deg1 - 1
    for p in range(npoly):
        a = coeffs[p]
        lead = abs(a[d])
        rad = 0.0
        for m in range(d):
            v = (abs(a[m]) / lead) ** (1.0 / (d - m))
            if v > rad:
                rad = v
        z = np.empty(d, dtype=np.complex128)
        for j in range(d):
            ang = 2.0 * math.pi * j / d + 0.4
            z[j] = rad * complex(math.cos(ang), math.sin(ang))
        done = np.zeros(d, dtype=np.bool_)
        ok = False
        for _ in range(max_iter):
            ndone = 0
            for j in range(d):
                if done[j]:
                    ndone += 1
                    continue
                zj = z[j]
                # Horner for p and p'
                pv = a[d]
                dv = 0j
                for m in range(d - 1, -1, -1):
                    dv = dv * zj + pv
                    pv = pv * zj + a[m]
                if pv == 0:
                    done[j] = True
                    continue
                ratio = pv / dv
                s = 0j
                for k in range(d):
                    if k != j:
                        s += 1.0 / (zj - z[k])
                w = ratio / (1.0 - ratio * s)
                z[j] = zj - w
                if abs(w) <= tol * (1.0 + abs(zj)):
                    done[j] = True
            if ndone == d:
                ok = True
                break
        for j in range(d):
            roots[p, j] = z[j]
        converged[p] = ok
