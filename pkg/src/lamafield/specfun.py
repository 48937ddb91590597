"""Real-order special functions used throughout the package.

Modified Bessel function of the second kind (plain and log scale),
log-gamma, digamma and its inverse.  The log-scale Bessel routine is the
workhorse: every downstream expectation formula goes through ratios of
``log_bessel_k`` values so that extreme orders and arguments never
overflow.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special as sps

from .errors import OverflowSignal, NumericError, ValidationError

__all__ = [
    "SpecFunConfig",
    "bessel_k",
    "log_bessel_k",
    "log_gamma",
    "digamma",
    "inverse_digamma",
]

_EULER_GAMMA = 0.5772156649015329

# Order threshold above which kve is never attempted: the uniform
# large-order expansion is already at machine accuracy there and AMOS
# becomes slow/overflow-prone.
_DEBYE_ONLY_ORDER = 1e4


@dataclass(frozen=True)
class SpecFunConfig:
    """Newton-iteration controls for the inverse digamma."""

    newton_tol: float = 1e-12
    max_newton_iters: int = 64

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValidationError("newton_tol must be > 0")
        if self.max_newton_iters < 1:
            raise ValidationError("max_newton_iters must be >= 1")


DEFAULT_SPECFUN_CONFIG = SpecFunConfig()


def _log_k_series(a, x):
    """log K_a(x) from the ascending series, for small x relative to sqrt(a).

    Valid when x <= 0.5*sqrt(a+1): the leading term 0.5*Gamma(a)(2/x)^a
    dominates and the correction series converges without cancellation.
    """
    z = x * x / 4.0
    m = np.ones_like(a)
    term = np.ones_like(a)
    for k in range(1, 60):
        d = k - a
        # A denominator hit means integer order a=k; the remaining terms are
        # negligible at this branch's x range, so stop contributing there.
        term = term * z / np.where(np.abs(d) < 1e-9, np.inf, k * d)
        m = m + term
    return np.log(0.5) + sps.gammaln(a) + a * (np.log(2.0) - np.log(x)) + np.log(m)


def _log_k_debye(a, x):
    """log K_a(x) from the uniform large-order (Debye) expansion."""
    z = x / a
    s = np.hypot(1.0, z)
    t = 1.0 / s
    eta = s + np.log(z / (1.0 + s))
    u1 = (3 * t - 5 * t**3) / 24.0
    u2 = (81 * t**2 - 462 * t**4 + 385 * t**6) / 1152.0
    u3 = (30375 * t**3 - 369603 * t**5 + 765765 * t**7 - 425425 * t**9) / 414720.0
    corr = 1.0 - u1 / a + u2 / a**2 - u3 / a**3
    return 0.5 * np.log(np.pi / (2 * a)) - a * eta - 0.25 * np.log1p(z * z) + np.log(corr)


def log_bessel_k(order, x):
    """log K_order(x), stable for any real order and x > 0.

    Uses the exponentially scaled AMOS routine where representable, the
    ascending series in log space where kve overflows with x small
    relative to sqrt(order), and the uniform large-order expansion
    otherwise.

    Parameters
    ----------
    order : float or array_like
        Real order; K_a = K_{-a} is applied.
    x : float or array_like
        Argument, must be > 0.

    Returns
    -------
    float or ndarray
    """
    a = np.abs(np.asarray(order, dtype=float))
    xv = np.asarray(x, dtype=float)
    scalar = a.ndim == 0 and xv.ndim == 0
    a, xv = np.atleast_1d(*np.broadcast_arrays(a, xv))
    if np.any(xv <= 0) or np.any(~np.isfinite(xv)):
        raise ValidationError("bessel argument must be positive and finite")

    out = np.empty(a.shape)
    direct = a < _DEBYE_ONLY_ORDER
    if np.any(direct):
        w = sps.kve(a[direct], xv[direct])
        ok = np.isfinite(w) & (w > 0)
        res = np.empty(w.shape)
        res[ok] = np.log(w[ok]) - xv[direct][ok]
        if np.any(~ok):
            ab, xb = a[direct][~ok], xv[direct][~ok]
            ser = xb <= 0.5 * np.sqrt(ab + 1.0)
            sub = np.empty(ab.shape)
            if np.any(ser):
                sub[ser] = _log_k_series(ab[ser], xb[ser])
            if np.any(~ser):
                sub[~ser] = _log_k_debye(ab[~ser], xb[~ser])
            res[~ok] = sub
        out[direct] = res
    if np.any(~direct):
        out[~direct] = _log_k_debye(a[~direct], xv[~direct])
    return float(out[0]) if scalar else out.reshape(np.broadcast_shapes(np.shape(order), np.shape(x)))


def bessel_k(order, x):
    """Modified Bessel function of the second kind, K_order(x).

    Raises OverflowSignal when the value is not representable in double
    precision; callers needing that regime must use log_bessel_k.
    """
    xv = np.asarray(x, dtype=float)
    if np.any(xv <= 0) or np.any(~np.isfinite(xv)):
        raise ValidationError("bessel argument must be positive and finite")
    v = sps.kv(np.abs(order), xv)
    if np.any(~np.isfinite(np.atleast_1d(v))) or np.any(np.atleast_1d(v) == 0):
        raise OverflowSignal(
            "K_order(x) overflows or underflows double precision; use log_bessel_k"
        )
    return v


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    xv = np.asarray(x, dtype=float)
    if np.any(xv <= 0):
        raise ValidationError("log_gamma requires x > 0")
    return sps.gammaln(x)


def digamma(x):
    """Digamma function psi(x) for x > 0."""
    xv = np.asarray(x, dtype=float)
    if np.any(xv <= 0):
        raise ValidationError("digamma requires x > 0")
    return sps.digamma(x)


def inverse_digamma(y, config: SpecFunConfig = DEFAULT_SPECFUN_CONFIG):
    """Inverse of the digamma function on (0, inf).

    Starts from the standard piecewise guess (exp(y) + 0.5 for y >= -2.22,
    -1/(y + Euler gamma) below) and refines by Newton iteration.
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    t = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y + _EULER_GAMMA))
    t = np.maximum(t, 1e-300)
    for _ in range(config.max_newton_iters):
        f = sps.digamma(t) - y
        step = f / sps.polygamma(1, t)
        t_new = t - step
        # psi' > 0 and psi'' < 0 make Newton overshoot only toward 0;
        # halve any step that would leave the domain.
        bad = t_new <= 0
        while np.any(bad):
            step = np.where(bad, step / 2, step)
            t_new = t - step
            bad = t_new <= 0
        done = np.abs(t_new - t) <= config.newton_tol * np.abs(t_new)
        t = t_new
        if np.all(done):
            break
    else:
        raise NumericError("inverse_digamma Newton iteration did not converge")
    return float(t[0]) if scalar else t
