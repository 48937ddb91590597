"""Matern random fields driven by asymmetric Laplace noise.

Finite-element simulation of the fractional SPDE under Laplace forcing
and ECM maximum-likelihood estimation of the noise and range parameters.
"""

from .ecm import EcmConfig, Theta, ecm_fit, observed_loglik
from .fem import (
    FemDiscretization,
    Mesh,
    assemble,
    build_mesh_1d,
    build_mesh_2d,
    fractional_apply,
    k_alpha_even,
    log_det_k_alpha,
    operator_matrix,
)
from .kernels import BACKEND
from .matern import (
    LaplaceParams,
    MaternParams,
    QuadSpec,
    green_kernel,
    marginal_cf,
    marginal_density,
    matern_cov,
    matern_spectrum,
)
from .noise import (
    NoiseRealization,
    SeriesTruncation,
    noise_load_logpdf,
    sample_noise,
    series_oracle_integral,
)
from .sampler import FieldSample, simulate_gaussian, simulate_laplace
from .specfun import (
    SpecFunConfig,
    bessel_k,
    digamma,
    inverse_digamma,
    log_bessel_k,
    log_gamma,
)
from .study import StudyCase, StudyResult, TABLE_CASES, run_case, study_case

__version__ = "0.1.0"
