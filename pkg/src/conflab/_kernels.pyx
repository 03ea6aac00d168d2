# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics must match conflab._pure exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport asin, log, fabs, sqrt, sin
from libc.math cimport fmin, fmax

cnp.import_array()


cdef inline double _chord_angle(double complex a1, double complex a2,
                                double complex b1, double complex b2) nogil:
    cdef double complex det = a1 * b2 - a2 * b1
    cdef double m = sqrt(det.real * det.real + det.imag * det.imag)
    if m > 1.0:
        m = 1.0
    return 2.0 * asin(m)


def geodesic_distances(const double complex[::1] p1, const double complex[::1] p2,
                       double complex x1, double complex x2):
    cdef Py_ssize_t i, n = p1.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _chord_angle(p1[i], p2[i], x1, x2)
    return out


cdef inline double _ramp(double r, double d, double dl) nogil:
    cdef double v = (r - d) / dl + 0.5
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 1.0
    return v


cdef inline double sin_half_sq(double r) nogil:
    cdef double v = sin(0.5 * r)
    return v * v


def ball_mass(const double complex[::1] p1, const double complex[::1] p2,
              const double[::1] w, const double[::1] delta,
              double complex x1, double complex x2, double r):
    """Smoothed mass of the ball of radius r; arcsin only inside the ramp band."""
    cdef Py_ssize_t i, n = p1.shape[0]
    cdef double acc = 0.0, dmax = 0.0, s_in = -1.0, s_out = 2.0, sq
    cdef double complex det
    cdef double pi = 3.141592653589793
    with nogil:
        for i in range(n):
            if delta[i] > dmax:
                dmax = delta[i]
        if r - 0.5 * dmax > 0.0:
            s_in = sin_half_sq(r - 0.5 * dmax)
        if r + 0.5 * dmax < pi:
            s_out = sin_half_sq(r + 0.5 * dmax)
        for i in range(n):
            det = p1[i] * x2 - p2[i] * x1
            sq = det.real * det.real + det.imag * det.imag
            if sq < s_in:
                acc += w[i]
            elif sq < s_out:
                acc += w[i] * _ramp(r, 2.0 * asin(sqrt(fmin(sq, 1.0))), delta[i])
    return acc


def rho_bisect(const double complex[::1] p1, const double complex[::1] p2,
               const double[::1] w, const double[::1] delta,
               double complex x1, double complex x2,
               double target, double tol, int max_iter=200, int nbins=4096):
    """Smallest r with smoothed ball mass equal to target.

    A weight histogram over s = sin^2(d/2) brackets the crossing; bisection
    then runs on the nodes whose ramp meets the bracket.
    """
    cdef Py_ssize_t n = p1.shape[0]
    cdef Py_ssize_t i, m, k
    cdef int b, kb, it
    s_arr = np.empty(n, dtype=np.float64)
    hist_arr = np.zeros(nbins, dtype=np.float64)
    hist_hi_arr = np.zeros(nbins, dtype=np.float64)
    d_arr = np.empty(n, dtype=np.float64)
    wa_arr = np.empty(n, dtype=np.float64)
    da_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] sv = s_arr
    cdef double[::1] hist = hist_arr
    cdef double[::1] hist_hi = hist_hi_arr
    cdef double[::1] d = d_arr
    cdef double[::1] wa = wa_arr
    cdef double[::1] da = da_arr
    cdef double complex det
    cdef double sq, dmax = 0.0, cum = 0.0, lo, hi, mid = 0.0, base = 0.0, mass, half
    cdef double s_in, s_out, dd, bw, new_lo, new_hi, pi = 3.141592653589793
    with nogil:
        for i in range(n):
            det = p1[i] * x2 - p2[i] * x1
            sq = det.real * det.real + det.imag * det.imag
            if sq > 1.0:
                sq = 1.0
            sv[i] = sq
            b = <int>(sq * nbins)
            if b >= nbins:
                b = nbins - 1
            hist[b] += w[i]
            if delta[i] > dmax:
                dmax = delta[i]
        kb = nbins - 1
        for b in range(nbins):
            cum = cum + hist[b]
            if cum >= target:
                kb = b
                break
        lo = 2.0 * asin(sqrt(<double>kb / nbins)) - 0.5 * dmax
        hi = 2.0 * asin(sqrt(fmin(<double>(kb + 1) / nbins, 1.0))) + 0.5 * dmax
        lo = fmax(lo, 0.0)
        hi = fmin(hi, pi)
        s_in = -1.0
        if lo - 0.5 * dmax > 0.0:
            s_in = sin_half_sq(lo - 0.5 * dmax)
        s_out = 2.0
        if hi + 0.5 * dmax < pi:
            s_out = sin_half_sq(hi + 0.5 * dmax)
        m = 0
        for i in range(n):
            if sv[i] <= s_in:
                base = base + w[i]
            elif sv[i] >= s_out:
                pass
            else:
                dd = 2.0 * asin(sqrt(sv[i]))
                half = 0.5 * delta[i]
                if dd + half <= lo:
                    base = base + w[i]
                elif dd - half >= hi:
                    pass
                else:
                    d[m] = dd
                    wa[m] = w[i]
                    da[m] = delta[i]
                    m = m + 1
        # refine the bracket with histograms of each node's ramp ends
        bw = (hi - lo) / nbins
        if bw > 0.0:
            for b in range(nbins):
                hist[b] = 0.0
                hist_hi[b] = 0.0
            for i in range(m):
                half = 0.5 * da[i]
                b = <int>((d[i] - half - lo) / bw)
                hist[min(max(b, 0), nbins - 1)] += wa[i]
                b = <int>((d[i] + half - lo) / bw)
                hist_hi[min(max(b, 0), nbins - 1)] += wa[i]
            cum = base
            new_lo = lo
            for b in range(nbins):
                cum = cum + hist[b]
                if cum >= target:
                    new_lo = lo + b * bw
                    break
            cum = base
            new_hi = hi
            for b in range(nbins):
                cum = cum + hist_hi[b]
                if cum >= target:
                    new_hi = fmin(lo + (b + 1) * bw, hi)
                    break
            lo = new_lo
            hi = new_hi
            k = 0
            for i in range(m):
                half = 0.5 * da[i]
                if d[i] + half <= lo:
                    base = base + wa[i]
                elif d[i] - half >= hi:
                    pass
                else:
                    d[k] = d[i]
                    wa[k] = wa[i]
                    da[k] = da[i]
                    k = k + 1
            m = k
        for it in range(max_iter):
            mid = 0.5 * (lo + hi)
            mass = base
            for i in range(m):
                mass = mass + wa[i] * _ramp(mid, d[i], da[i])
            if fabs(mass - target) <= tol:
                break
            if mass < target:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15:
                break
            k = 0
            for i in range(m):
                half = 0.5 * da[i]
                if d[i] + half <= lo:
                    base = base + wa[i]
                elif d[i] - half >= hi:
                    pass
                else:
                    d[k] = d[i]
                    wa[k] = wa[i]
                    da[k] = da[i]
                    k = k + 1
            m = k
    return mid


def log_potential(const double[::1] sx, const double[::1] sy, const double[::1] sw,
                  const double[::1] tx, const double[::1] ty,
                  double self_value, double coincide2):
    """out[j] = sum_i sw[i] * log|t_j - s_i|, self cell replaced by self_value."""
    cdef Py_ssize_t i, j, ns = sx.shape[0], nt = tx.shape[0]
    out = np.empty(nt, dtype=np.float64)
    cdef double[::1] o = out
    cdef double acc, dx, dy, r2, x, y
    with nogil:
        for j in range(nt):
            acc = 0.0
            x = tx[j]
            y = ty[j]
            for i in range(ns):
                dx = x - sx[i]
                dy = y - sy[i]
                r2 = dx * dx + dy * dy
                if r2 <= coincide2:
                    acc = acc + sw[i] * self_value
                else:
                    acc = acc + sw[i] * 0.5 * log(r2)
            o[j] = acc
    return out
