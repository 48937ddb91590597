"""Pure-numpy implementation of the per-node E-step kernels.

These are the hot loops of the ECM estimator: posterior moments of the
latent gamma variances given the noise loads, and the marginal
log-density of a load.  A compiled twin lives in ``_estep_cy``; backend
selection happens in ``kernels``.
"""

import numpy as np
from scipy import special as sps

from .specfun import log_bessel_k

# Bessel-argument thresholds for the three evaluation branches of the
# posterior gamma mean: below the small threshold the limiting gamma form
# is used, above the large one the first-order ratio expansion.
SMALL_X_COEF = 0.01
LARGE_X = 1e4

_TINY_DELTA = 1e-290


def conditional_moments(lam, a, sigma, mu, gamma_bar, tau, eps, trunc_bound):
    """Posterior moments of the latent gamma variances for each node.

    Returns (E[Gamma], E[1/Gamma], E[log Gamma]) conditionally on loads
    ``lam`` at the current noise parameters.  E[1/Gamma] is computed by
    the two-Bessel recurrence and clamped to ``trunc_bound``;
    E[log Gamma] uses a forward difference of step ``eps`` in the order,
    taken on the log-Bessel scale.
    """
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    delta = lam - gamma_bar * a
    abs_d = np.maximum(np.abs(delta), _TINY_DELTA)
    m2 = 2.0 * sigma * sigma + mu * mu
    sm = np.sqrt(m2)
    x = abs_d * sm / (sigma * sigma)
    ta = tau * a
    p = ta - 0.5

    small = x < SMALL_X_COEF * np.sqrt(ta + 1.0)
    large = x > LARGE_X
    exact = ~(small | large)

    lk_p = log_bessel_k(p, x)
    e_gamma = np.empty_like(abs_d)
    if np.any(exact):
        xe, pe = x[exact], p[exact]
        e_gamma[exact] = abs_d[exact] / sm * np.exp(
            log_bessel_k(pe + 1.0, xe) - lk_p[exact]
        )
    if np.any(small):
        tas = ta[small]
        val = np.empty_like(tas)
        pos = tas > 0.5
        val[pos] = (tas[pos] - 0.5) * 2.0 * sigma * sigma / m2
        neg = ~pos
        if np.any(neg):
            val[neg] = np.exp(
                sps.gammaln(tas[neg] + 0.5)
                - sps.gammaln(0.5 - tas[neg])
                + 2.0 * tas[neg] * np.log(2.0 * sigma * sigma)
                - (2.0 * tas[neg] + 1.0) / 2.0 * np.log(m2)
                + (1.0 - 2.0 * tas[neg]) * np.log(abs_d[small][neg])
            )
        e_gamma[small] = val
    if np.any(large):
        e_gamma[large] = abs_d[large] / sm + ta[large] * sigma * sigma / m2

    e_inv = (m2 * e_gamma - sigma * sigma * (2.0 * ta - 1.0)) / np.maximum(
        delta * delta, _TINY_DELTA
    )
    # Jensen floor 1/E[Gamma] repairs cancellation loss near the center,
    # then the stabilization clamp; an exact center is the pole case.
    e_inv = np.maximum(e_inv, 1.0 / np.maximum(e_gamma, _TINY_DELTA))
    e_inv = np.minimum(e_inv, trunc_bound)
    e_inv = np.where(delta == 0.0, trunc_bound, e_inv)

    e_log = np.log(abs_d / sm) + (log_bessel_k(p + eps, x) - lk_p) / eps
    return e_gamma, e_inv, e_log


def noise_load_logpdf_vec(lam, a, sigma, mu, gamma_bar, tau):
    """Log marginal density of each noise load under the gamma mixture.

    Entries at an exact pole (delta = 0 with tau*a <= 1/2) come back as
    +inf; the scalar wrapper turns that into an explicit error.
    """
    lam = np.asarray(lam, dtype=float)
    a = np.asarray(a, dtype=float)
    delta = lam - gamma_bar * a
    abs_d = np.abs(delta)
    m2 = 2.0 * sigma * sigma + mu * mu
    sm = np.sqrt(m2)
    ta = tau * a
    p = ta - 0.5
    base = (
        delta * mu / (sigma * sigma)
        - 0.5 * np.log(2.0 * np.pi * sigma * sigma)
        - sps.gammaln(ta)
        + np.log(2.0)
    )
    out = np.empty_like(abs_d)
    center = abs_d == 0.0
    if np.any(center):
        pc = p[center]
        val = np.full(pc.shape, np.inf)
        fin = pc > 0
        # analytic delta -> 0 limit: 0.5*Gamma(p)*(2 sigma^2/m2)^p
        val[fin] = (
            base[center][fin]
            + np.log(0.5)
            + sps.gammaln(pc[fin])
            + pc[fin] * np.log(2.0 * sigma * sigma / m2)
        )
        out[center] = val
    rest = ~center
    if np.any(rest):
        xr = abs_d[rest] * sm / (sigma * sigma)
        out[rest] = (
            base[rest]
            + p[rest] * np.log(abs_d[rest] / sm)
            + log_bessel_k(p[rest], xr)
        )
    return out
