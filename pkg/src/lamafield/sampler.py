"""Field simulation: the Laplace-driven SPDE and its Gaussian twin.

Draw the noise loads, solve the (possibly fractional) operator equation
for the basis weights, and read the field off at the observation
locations.  Even orders route through a sparse factorization, all other
orders through the spectral path; both realize the identical linear map,
so a shared RNG stream yields matching fields.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ValidationError
from .fem import FemDiscretization, fractional_apply, k_alpha_even
from .matern import LaplaceParams, MaternParams
from .noise import NoiseRealization, sample_noise

__all__ = ["FieldSample", "simulate_laplace", "simulate_gaussian", "field_from_noise"]


@dataclass(frozen=True)
class FieldSample:
    """Simulated field values plus the underlying weights and noise."""

    values: np.ndarray
    weights: np.ndarray
    noise: NoiseRealization | None


def _is_even(alpha) -> bool:
    return alpha == int(alpha) and int(alpha) % 2 == 0


def _solve_weights(fd: FemDiscretization, kappa: float, alpha: float, loads,
                   use_sparse: bool | None = None):
    """weights = (Ct^{-1} K)^{-alpha/2} Ct^{-1} loads, sparse or spectral."""
    if use_sparse is None:
        use_sparse = _is_even(alpha)
    if use_sparse:
        if not _is_even(alpha):
            raise ValidationError("sparse weight solve needs even alpha")
        ka = k_alpha_even(fd, kappa, alpha)
        return splu(ka.tocsc()).solve(np.asarray(loads, dtype=float))
    return fractional_apply(fd, kappa, alpha, np.asarray(loads, dtype=float) / fd.a,
                            direction="inverse")


def field_from_noise(mp: MaternParams, fd: FemDiscretization,
                     noise: NoiseRealization, use_sparse: bool | None = None) -> FieldSample:
    """Deterministic part of the sampler: loads -> weights -> field."""
    w = _solve_weights(fd, mp.kappa, mp.alpha, noise.lam, use_sparse)
    return FieldSample(values=fd.phi @ w, weights=w, noise=noise)


def simulate_laplace(mp: MaternParams, lp: LaplaceParams, fd: FemDiscretization,
                     rng: np.random.Generator,
                     use_sparse: bool | None = None) -> FieldSample:
    """One replicate of the Laplace-driven field at the observation points."""
    noise = sample_noise(lp, fd.a, rng)
    return field_from_noise(mp, fd, noise, use_sparse)


def simulate_gaussian(mp: MaternParams, fd: FemDiscretization,
                      rng: np.random.Generator,
                      use_sparse: bool | None = None) -> FieldSample:
    """Gaussian baseline with the same Matern covariance.

    Weights have precision K_alpha Ct^{-1} K_alpha (even-alpha form); the
    field is scaled by phi so its variance parameter is mp.phi2.
    """
    if use_sparse is None:
        use_sparse = _is_even(mp.alpha)
    xi = rng.standard_normal(fd.n)
    rhs = np.sqrt(fd.a) * xi
    if use_sparse:
        ka = k_alpha_even(fd, mp.kappa, mp.alpha)
        w = splu(ka.tocsc()).solve(rhs)
    else:
        w = fractional_apply(fd, mp.kappa, mp.alpha, rhs / fd.a, direction="inverse")
    w = np.sqrt(mp.phi2) * w
    return FieldSample(values=fd.phi @ w, weights=w, noise=None)
