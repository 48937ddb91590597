"""Closed-form Matern quantities and the marginal law of the field.

Covariance, spectral density, the Green kernel of the fractional
operator, and the marginal characteristic function of the Laplace-driven
field with its Fourier inversion to a density.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special as sps

from .errors import NumericError, SingularityError, ValidationError
from .specfun import log_bessel_k

__all__ = [
    "MaternParams",
    "LaplaceParams",
    "QuadSpec",
    "matern_cov",
    "matern_spectrum",
    "green_kernel",
    "marginal_cf",
    "marginal_density",
]


@dataclass(frozen=True)
class MaternParams:
    """Smoothness/scale/variance triple plus dimension.

    alpha = nu + d/2 is derived and must not be set directly.
    """

    nu: float
    kappa: float
    phi2: float
    d: int = 1

    def __post_init__(self):
        if not (self.nu > 0 and self.kappa > 0 and self.phi2 > 0):
            raise ValidationError("nu, kappa, phi2 must all be positive")
        if self.d not in (1, 2):
            raise ValidationError("dimension d must be 1 or 2")

    @property
    def alpha(self) -> float:
        return self.nu + self.d / 2.0

    @classmethod
    def from_alpha(cls, alpha, kappa, phi2, d=1):
        nu = alpha - d / 2.0
        if nu <= 0:
            raise ValidationError("alpha must exceed d/2")
        return cls(nu=nu, kappa=kappa, phi2=phi2, d=d)


@dataclass(frozen=True)
class LaplaceParams:
    """Asymmetric Laplace noise law (mu, sigma, gamma, tau).

    gamma_bar = gamma * tau is the reparameterized drift used by the
    estimator.  The implied field variance parameter is
    phi^2 = tau * (sigma^2 + mu^2).
    """

    mu: float
    sigma: float
    gamma: float
    tau: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.tau > 0):
            raise ValidationError("sigma and tau must be positive")

    @property
    def gamma_bar(self) -> float:
        return self.gamma * self.tau

    @property
    def phi2(self) -> float:
        return self.tau * (self.sigma**2 + self.mu**2)

    @classmethod
    def from_gamma_bar(cls, mu, sigma, gamma_bar, tau):
        return cls(mu=mu, sigma=sigma, gamma=gamma_bar / tau, tau=tau)


@dataclass(frozen=True)
class QuadSpec:
    """Controls for the characteristic-function quadrature and inversion."""

    nodes_per_panel: int = 16
    kernel_drop: float = 1e-16     # tail cut: G(rmax) <= kernel_drop * G(r_ref)
    origin_frac: float = 1e-10     # rmin = origin_frac / kappa (graded panels)
    tail_tol: float = 1e-8         # max allowed relative mass in the last panel
    cf_edge: float = 1e-10         # require |cf| below this at the band edge
    n_grid: int = 2**14            # minimum inversion grid size
    max_band: float = 1e9

    def __post_init__(self):
        if self.nodes_per_panel < 2 or self.n_grid < 16:
            raise ValidationError("quadrature spec too coarse")


DEFAULT_QUAD = QuadSpec()


def _radial(h, d):
    """Reduce lag input (scalar distance, lag array, or vectors) to radii."""
    h = np.asarray(h, dtype=float)
    if h.ndim == 0 or (d == 1 and h.ndim == 1):
        return np.abs(h)
    if h.ndim >= 1 and h.shape[-1] == d:
        return np.linalg.norm(h, axis=-1)
    return np.abs(h)


def matern_cov(h, p: MaternParams):
    """Matern covariance C(h) for lag vector(s) or scalar distance h."""
    r = _radial(h, p.d)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    nu, kappa = p.nu, p.kappa
    log_pref = (
        (1.0 - nu) * np.log(2.0)
        + np.log(p.phi2)
        - (p.d / 2.0) * np.log(4.0 * np.pi)
        - sps.gammaln(nu + p.d / 2.0)
        - 2.0 * nu * np.log(kappa)
    )
    out = np.empty(r.shape)
    z = kappa * r
    at0 = z < 1e-12
    # analytic h -> 0 limit: phi^2 Gamma(nu) / ((4 pi)^{d/2} Gamma(nu+d/2) kappa^{2 nu})
    out[at0] = np.exp(log_pref + (nu - 1.0) * np.log(2.0) + sps.gammaln(nu))
    zz = z[~at0]
    out[~at0] = np.exp(log_pref + nu * np.log(zz) + log_bessel_k(nu, zz))
    return float(out[0]) if scalar else out


def matern_spectrum(k, p: MaternParams):
    """Matern spectral density S(k) for frequency vector(s) k."""
    k2 = _radial(k, p.d) ** 2
    return p.phi2 / (2.0 * np.pi) ** p.d / (p.kappa**2 + k2) ** (p.nu + p.d / 2.0)


def green_kernel(r, alpha, kappa, d=1):
    """Green kernel G_alpha(r) of the fractional operator (kappa^2 - Lap)^{alpha/2}.

    Has the shape of a Matern covariance with smoothness (alpha-d)/2 and
    unit variance parameter.  Requires alpha > d/2; at r = 0 the kernel
    diverges when alpha <= d and that is signalled, never returned as inf.
    """
    if alpha <= d / 2.0:
        raise ValidationError("green_kernel requires alpha > d/2")
    if kappa <= 0:
        raise ValidationError("kappa must be positive")
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0):
        raise ValidationError("r must be nonnegative")
    nup = (alpha - d) / 2.0
    if np.any(r == 0.0) and nup <= 0:
        raise SingularityError("G_alpha has a pole at r=0 for alpha <= d")
    log_pref = (
        (1.0 - nup) * np.log(2.0)
        - (d / 2.0) * np.log(4.0 * np.pi)
        - sps.gammaln(alpha / 2.0)
        - (alpha - d) * np.log(kappa)
    )
    out = np.empty(r.shape)
    z = kappa * r
    at0 = z < 1e-12
    if np.any(at0):
        out[at0] = np.exp(log_pref + (nup - 1.0) * np.log(2.0) + sps.gammaln(nup))
    zz = z[~at0]
    out[~at0] = np.exp(log_pref + nup * np.log(zz) + log_bessel_k(nup, zz))
    return float(out[0]) if scalar else out


def _kernel_quadrature(mp: MaternParams, quad: QuadSpec):
    """Radial nodes/weights for integrals of f(G_alpha(r)) over R^d.

    Geometrically graded panels toward the origin handle the kernel pole
    for alpha <= d; the surface measure of the d-sphere is folded into
    the weights.
    """
    alpha, kappa, d = mp.alpha, mp.kappa, mp.d
    r_ref = 0.1 / kappa
    g_ref = green_kernel(r_ref, alpha, kappa, d)
    r_max = 1.0 / kappa
    while green_kernel(r_max, alpha, kappa, d) > quad.kernel_drop * g_ref:
        r_max *= 2.0
    r_min = quad.origin_frac / kappa
    edges = [r_max]
    while edges[-1] > r_min:
        edges.append(edges[-1] / 2.0)
    edges = np.array(edges[::-1])
    xg, wg = leggauss(quad.nodes_per_panel)
    mid = (edges[1:] + edges[:-1]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    r = (mid[:, None] + half[:, None] * xg).ravel()
    w = (half[:, None] * wg).ravel()
    surf = 2.0 if d == 1 else 2.0 * np.pi * r
    return r, w * surf


def _cf_exponent(u, lp: LaplaceParams, mp: MaternParams, quad: QuadSpec):
    """CF exponent psi(u) = log cf(u), computed without ever wrapping phase."""
    r, w = _kernel_quadrature(mp, quad)
    g = green_kernel(r, mp.alpha, mp.kappa, mp.d)
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    sig2, muv = lp.sigma**2, lp.mu
    n_last = quad.nodes_per_panel
    out = np.empty(u_arr.shape, dtype=complex)
    # chunk over u to bound the (n_u x n_nodes) temporaries
    for i0 in range(0, u_arr.size, 4096):
        uc = u_arr[i0 : i0 + 4096, None]
        ug = uc * g
        integrand = -np.log(1.0 + (0.5 * sig2) * ug * ug - 1j * muv * ug)
        total = integrand @ w
        tail = integrand[:, -n_last:] @ w[-n_last:]
        big = np.abs(total) > 1e-30
        if np.any(np.abs(tail[big]) > quad.tail_tol * np.abs(total[big])):
            raise NumericError(
                "characteristic-function quadrature tail not converged; "
                "increase the truncation radius"
            )
        out[i0 : i0 + 4096] = (
            lp.tau * total + 1j * lp.gamma_bar * uc[:, 0] * mp.kappa ** (-mp.alpha)
        )
    return out


def marginal_cf(u, lp: LaplaceParams, mp: MaternParams, quad: QuadSpec = DEFAULT_QUAD):
    """Characteristic function of the stationary field marginal X(s).

    Numeric radial quadrature of the mixture exponent against the Green
    kernel; the linear drift term integrates in closed form to
    i*gamma_bar*u*kappa^{-alpha}.
    """
    out = np.exp(_cf_exponent(u, lp, mp, quad))
    return out[0] if np.ndim(u) == 0 else out


def _analytic_moments(lp: LaplaceParams, mp: MaternParams):
    """Exact mean and variance of the marginal from the cumulants."""
    mean = lp.tau * (lp.gamma + lp.mu) * mp.kappa ** (-mp.alpha)
    var = matern_cov(0.0, MaternParams(nu=mp.nu, kappa=mp.kappa, phi2=lp.phi2, d=mp.d))
    return mean, float(var)


def marginal_density(grid, lp: LaplaceParams, mp: MaternParams, quad: QuadSpec = DEFAULT_QUAD):
    """Marginal density of X(s) on an equally spaced grid, by CF inversion.

    The inversion band grows until |cf| drops below quad.cf_edge, the FFT
    grid until its period covers the density support; the exponent is
    evaluated on a coarse log-spaced set of frequencies and spline
    interpolated in between, which keeps the cost independent of the FFT
    size.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValidationError("grid must be a 1-D array with >= 2 points")
    steps = np.diff(grid)
    if not np.allclose(steps, steps[0], rtol=1e-8, atol=0):
        raise ValidationError("grid must be equally spaced")

    mean, var = _analytic_moments(lp, mp)
    std = np.sqrt(var)

    band = 64.0 / std
    while np.abs(marginal_cf(band, lp, mp, quad)) > quad.cf_edge:
        band *= 2.0
        if band > quad.max_band:
            raise NumericError(
                "characteristic function decays too slowly; enlarge quad.max_band"
            )

    # periodization window: density support plus generous tail padding
    span = 2.0 * (abs(mean) + 80.0 * std) + 2.0 * (np.max(np.abs(grid)) + std)
    n = quad.n_grid
    while n * 2.0 * np.pi / band < span:
        n *= 2
    du = band / n

    # CF exponent on a coarse log grid, cubic interpolation onto the FFT grid
    from scipy.interpolate import CubicSpline

    u_coarse = np.concatenate([[0.0], np.geomspace(du / 8.0, band, 3000)])
    psi = _cf_exponent(u_coarse, lp, mp, quad)
    spl_re = CubicSpline(u_coarse, psi.real)
    spl_im = CubicSpline(u_coarse, psi.imag)
    u_fine = np.arange(n) * du
    phi = np.exp(spl_re(u_fine) + 1j * spl_im(u_fine))
    phi[0] = 1.0

    # f(x_k) on the FFT-native grid x_k = 2 pi k / (n du), k wrapped
    coeff = np.fft.fft(phi)
    xs = np.fft.fftfreq(n, d=du) * 2.0 * np.pi
    order = np.argsort(xs)
    xs = xs[order]
    # trapezoid endpoint correction: subtract half of the j=0 term, and
    # double the real part to account for u < 0 (hermitian CF)
    fx = (np.real(coeff)[order] - 0.5) * du / np.pi
    dens = np.interp(grid, xs, fx)

    peak = dens.max()
    if peak <= 0:
        raise NumericError("density inversion produced no mass on the grid")
    if dens.min() < -1e-5 * peak:
        raise NumericError("density inversion shows large negative ringing")
    dens = np.where(dens < 0, 0.0, dens)
    return dens
