# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of the pure-numpy E-step kernels.

Single pass per node, fusing the three posterior moments; the log-Bessel
evaluation mirrors the branch structure of specfun.log_bessel_k.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, NAN, exp, fabs, hypot, isfinite, log, log1p, sqrt

from scipy.special.cython_special cimport gammaln, kve

cnp.import_array()

cdef double LOG_HALF = -0.6931471805599453
cdef double LOG_TWO = 0.6931471805599453
cdef double HALF_LOG_PI_OVER_TWO = 0.2257913526447274  # 0.5*log(pi/2)
cdef double LOG_2PI = 1.8378770664093453
cdef double SMALL_X_COEF = 0.01
cdef double LARGE_X = 1e4
cdef double TINY_DELTA = 1e-290
cdef double DEBYE_ONLY_ORDER = 1e4


cdef double _log_k_series(double a, double x) nogil:
    cdef double z = x * x / 4.0
    cdef double m = 1.0
    cdef double term = 1.0
    cdef double d
    cdef int k
    for k in range(1, 60):
        d = k - a
        if fabs(d) < 1e-9:
            break
        term = term * z / (k * d)
        m += term
        if fabs(term) < 1e-18 * fabs(m):
            break
    return LOG_HALF + gammaln(a) + a * (LOG_TWO - log(x)) + log(m)


cdef double _log_k_debye(double a, double x) nogil:
    cdef double z = x / a
    cdef double s = hypot(1.0, z)
    cdef double t = 1.0 / s
    cdef double t2 = t * t
    cdef double eta = s + log(z / (1.0 + s))
    cdef double u1 = t * (3.0 - 5.0 * t2) / 24.0
    cdef double u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0
    cdef double u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t2 * t2
                               - 425425.0 * t2 * t2 * t2) / 414720.0
    return (HALF_LOG_PI_OVER_TWO - 0.5 * log(a) - a * eta
            - 0.25 * log1p(z * z) + log(1.0 - u1 / a + u2 / (a * a) - u3 / (a * a * a)))


cdef double log_bessel_k(double order, double x) nogil:
    cdef double a = fabs(order)
    cdef double w
    if a < DEBYE_ONLY_ORDER:
        w = kve(a, x)
        if isfinite(w) and w > 0.0:
            return log(w) - x
        if x <= 0.5 * sqrt(a + 1.0):
            return _log_k_series(a, x)
    return _log_k_debye(a, x)


def conditional_moments(cnp.ndarray[cnp.float64_t, ndim=1] lam,
                        cnp.ndarray[cnp.float64_t, ndim=1] a,
                        double sigma, double mu, double gamma_bar, double tau,
                        double eps, double trunc_bound):
    """Fused (E[Gamma], E[1/Gamma], E[log Gamma]) per node; see _estep_py."""
    cdef Py_ssize_t n = lam.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_gamma = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_inv = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_log = np.empty(n)
    cdef double m2 = 2.0 * sigma * sigma + mu * mu
    cdef double sm = sqrt(m2)
    cdef double sig2 = sigma * sigma
    cdef double delta, abs_d, x, ta, p, eg, ei, lkp, floor_inv
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            delta = lam[i] - gamma_bar * a[i]
            abs_d = fabs(delta)
            if abs_d < TINY_DELTA:
                abs_d = TINY_DELTA
            x = abs_d * sm / sig2
            ta = tau * a[i]
            p = ta - 0.5
            lkp = log_bessel_k(p, x)
            if x < SMALL_X_COEF * sqrt(ta + 1.0):
                if ta > 0.5:
                    eg = (ta - 0.5) * 2.0 * sig2 / m2
                else:
                    eg = exp(gammaln(ta + 0.5) - gammaln(0.5 - ta)
                             + 2.0 * ta * log(2.0 * sig2)
                             - 0.5 * (2.0 * ta + 1.0) * log(m2)
                             + (1.0 - 2.0 * ta) * log(abs_d))
            elif x > LARGE_X:
                eg = abs_d / sm + ta * sig2 / m2
            else:
                eg = abs_d / sm * exp(log_bessel_k(p + 1.0, x) - lkp)
            e_gamma[i] = eg

            if delta == 0.0:
                ei = trunc_bound
            else:
                ei = (m2 * eg - sig2 * (2.0 * ta - 1.0)) / (delta * delta)
                floor_inv = 1.0 / eg if eg > TINY_DELTA else 1.0 / TINY_DELTA
                if ei < floor_inv:
                    ei = floor_inv
                if ei > trunc_bound:
                    ei = trunc_bound
            e_inv[i] = ei

            e_log[i] = log(abs_d / sm) + (log_bessel_k(p + eps, x) - lkp) / eps
    return e_gamma, e_inv, e_log


def noise_load_logpdf_vec(cnp.ndarray[cnp.float64_t, ndim=1] lam,
                          cnp.ndarray[cnp.float64_t, ndim=1] a,
                          double sigma, double mu, double gamma_bar, double tau):
    """Log marginal density of each load; +inf marks an exact pole."""
    cdef Py_ssize_t n = lam.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double m2 = 2.0 * sigma * sigma + mu * mu
    cdef double sm = sqrt(m2)
    cdef double sig2 = sigma * sigma
    cdef double delta, abs_d, ta, p, base, x
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            delta = lam[i] - gamma_bar * a[i]
            abs_d = fabs(delta)
            ta = tau * a[i]
            p = ta - 0.5
            base = (delta * mu / sig2 - 0.5 * (LOG_2PI + 2.0 * log(sigma))
                    - gammaln(ta) + LOG_TWO)
            if abs_d == 0.0:
                if p > 0.0:
                    out[i] = (base + LOG_HALF + gammaln(p)
                              + p * log(2.0 * sig2 / m2))
                else:
                    out[i] = INFINITY
            else:
                x = abs_d * sm / sig2
                out[i] = base + p * log(abs_d / sm) + log_bessel_k(p, x)
    return out
