"""Generalized asymmetric Laplace noise layer.

Conditional-Gaussian sampling of the noise loads, the truncated-series
distributional oracle, and the closed-form marginal log-density of a
single load.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import PoleError, ValidationError
from .matern import LaplaceParams

__all__ = [
    "NoiseRealization",
    "SeriesTruncation",
    "sample_noise",
    "loads_from_components",
    "series_oracle_integral",
    "noise_load_logpdf",
]


@dataclass(frozen=True)
class NoiseRealization:
    """One draw of the noise layer: latent variances, innovations, loads."""

    gammas: np.ndarray
    z: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class SeriesTruncation:
    """Number of retained series terms and the domain measure |D|."""

    n_terms: int
    domain_measure: float = 1.0

    def __post_init__(self):
        if self.n_terms < 0:
            raise ValidationError("n_terms must be >= 0")
        if self.domain_measure <= 0:
            raise ValidationError("domain_measure must be positive")


def loads_from_components(lp: LaplaceParams, a, gammas, z) -> np.ndarray:
    """Loads from their components; bit-exact re-evaluation of a draw."""
    a = np.asarray(a, dtype=float)
    return lp.gamma_bar * a + lp.mu * gammas + lp.sigma * np.sqrt(gammas) * z


def sample_noise(lp: LaplaceParams, a, rng: np.random.Generator) -> NoiseRealization:
    """Draw the noise loads for lumped masses a.

    Gamma_i ~ Gamma(tau * a_i, 1) and Z_i standard normal, independent
    across nodes; the load is gamma_bar*a_i + mu*Gamma_i +
    sigma*sqrt(Gamma_i)*Z_i, so E(load) = (gamma_bar + mu*tau)*a_i and
    Var(load) = tau*(sigma^2 + mu^2)*a_i.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValidationError("lumped masses must be positive")
    gammas = rng.gamma(shape=lp.tau * a, scale=1.0)
    z = rng.standard_normal(a.shape)
    return NoiseRealization(gammas=gammas, z=z, lam=loads_from_components(lp, a, gammas, z))


def series_oracle_integral(basis_eval, lp: LaplaceParams, trunc: SeriesTruncation,
                           rng: np.random.Generator, domain=(0.0, 1.0),
                           size: int = 1) -> np.ndarray:
    """Draws of integral(phi dLambda) from the truncated shot-noise series.

    Jump variances follow the gamma-process series Gamma_k =
    exp(-gamma_k / (tau |D|)) * W_k with unit-rate Poisson arrivals
    gamma_k and standard-exponential W_k; jump locations are uniform on
    the domain.  Used purely as a distributional oracle against
    sample_noise.
    """
    lo, hi = map(float, domain)
    if not hi > lo:
        raise ValidationError("domain must be a nonempty interval")
    measure = trunc.domain_measure
    theta = lp.tau * measure
    xs = np.linspace(lo, hi, 4097)
    drift = lp.gamma_bar * np.trapezoid(basis_eval(xs), xs)
    if trunc.n_terms == 0:
        return np.full(size, drift)
    out = np.empty(size)
    chunk = max(1, min(size, 2**23 // trunc.n_terms))
    for i0 in range(0, size, chunk):
        m = min(chunk, size - i0)
        arrivals = np.cumsum(rng.exponential(size=(m, trunc.n_terms)), axis=1)
        jumps = np.exp(-arrivals / theta) * rng.exponential(size=(m, trunc.n_terms))
        locs = rng.uniform(lo, hi, size=(m, trunc.n_terms))
        g = rng.standard_normal((m, trunc.n_terms))
        phis = basis_eval(locs)
        out[i0 : i0 + m] = (
            drift
            + lp.mu * np.sum(phis * jumps, axis=1)
            + lp.sigma * np.sum(phis * np.sqrt(jumps) * g, axis=1)
        )
    return out


def noise_load_logpdf(lam_i: float, a_i: float, lp: LaplaceParams) -> float:
    """Log marginal density of a single noise load.

    Closed Bessel form of the gamma-mixture integral.  At the center
    lam_i = gamma_bar * a_i the density is unbounded when
    tau * a_i <= 1/2, which is signalled as a pole instead of inf.
    """
    if a_i <= 0:
        raise ValidationError("a_i must be positive")
    val = kernels.noise_load_logpdf_vec(
        np.array([lam_i], dtype=float),
        np.array([a_i], dtype=float),
        lp.sigma, lp.mu, lp.gamma_bar, lp.tau,
    )[0]
    if np.isinf(val) and val > 0:
        raise PoleError(
            "noise load density has a pole at the center for tau*a <= 1/2"
        )
    return float(val)
