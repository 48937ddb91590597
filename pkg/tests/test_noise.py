import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats
from scipy.integrate import quad

from lamafield.errors import PoleError
from lamafield.matern import LaplaceParams
from lamafield.noise import (
    NoiseRealization,
    SeriesTruncation,
    loads_from_components,
    noise_load_logpdf,
    sample_noise,
    series_oracle_integral,
)

# two-sample KS critical value at the 1% level, equal sizes n:
# c(0.01) * sqrt(2/n) with c(0.01) = 1.628
KS_CRIT_1PCT = 1.628


def rng_of(seed):
    return np.random.Generator(np.random.Philox(seed))


def test_sample_noise_moments_symmetric():
    lp = LaplaceParams(mu=0.0, sigma=1.0, gamma=0.0, tau=2.0)
    a = np.ones(100_000)
    draw = sample_noise(lp, a, rng_of(0))
    se = np.sqrt(lp.phi2 / len(a))
    assert abs(draw.lam.mean()) < 4 * se


def test_sample_noise_variance_identity():
    # per-component variance tau*(sigma^2 + mu^2)*a_i
    lp = LaplaceParams(mu=1.0, sigma=1.0, gamma=0.0, tau=2.0)
    a = np.ones(100_000)
    draw = sample_noise(lp, a, rng_of(1))
    want = lp.tau * (lp.sigma**2 + lp.mu**2)
    assert abs(draw.lam.var() - want) / want < 0.05
    assert abs(draw.lam.mean() - (lp.gamma_bar + lp.mu * lp.tau)) < 4 * np.sqrt(
        want / len(a)
    )


def test_sample_noise_deterministic_and_recomputable():
    lp = LaplaceParams(mu=0.3, sigma=0.7, gamma=0.2, tau=1.5)
    a = np.linspace(0.5, 2.0, 64)
    d1 = sample_noise(lp, a, rng_of(7))
    d2 = sample_noise(lp, a, rng_of(7))
    assert np.array_equal(d1.lam, d2.lam)
    assert np.array_equal(d1.gammas, d2.gammas)
    rebuilt = loads_from_components(lp, a, d1.gammas, d1.z)
    assert np.array_equal(rebuilt, d1.lam)


def test_conditional_construction_is_gaussian():
    # (load - gamma_bar*a - mu*Gamma)/(sigma*sqrt(Gamma)) is standard normal
    lp = LaplaceParams(mu=0.8, sigma=1.3, gamma=-0.4, tau=2.0)
    a = np.ones(100_000)
    draw = sample_noise(lp, a, rng_of(3))
    resid = (draw.lam - lp.gamma_bar * a - lp.mu * draw.gammas) / (
        lp.sigma * np.sqrt(draw.gammas)
    )
    stat, _ = stats.kstest(resid, "norm")
    assert stat < KS_CRIT_1PCT / np.sqrt(len(a))


def test_series_oracle_drift_only():
    # with no jumps only the drift contribution remains
    lp = LaplaceParams(mu=1.0, sigma=1.0, gamma=0.7, tau=1.0)
    trunc = SeriesTruncation(n_terms=0, domain_measure=1.0)
    val = series_oracle_integral(lambda s: np.ones_like(s), lp, trunc, rng_of(0))
    assert_allclose(val, lp.gamma * 1.0, rtol=1e-10)
    # at general tau the drift of the measure is gamma_bar = gamma*tau
    lp2 = LaplaceParams(mu=0.0, sigma=1.0, gamma=0.7, tau=2.0)
    val2 = series_oracle_integral(lambda s: np.ones_like(s), lp2, trunc, rng_of(0))
    assert_allclose(val2, lp2.gamma_bar, rtol=1e-10)


def test_series_oracle_mean():
    lp = LaplaceParams(mu=1.0, sigma=1.0, gamma=0.0, tau=2.0)
    trunc = SeriesTruncation(n_terms=400, domain_measure=1.0)
    draws = series_oracle_integral(lambda s: np.ones_like(s), lp, trunc,
                                   rng_of(11), size=20_000)
    want = (lp.gamma + lp.mu * lp.tau) * 1.0
    se = np.sqrt(lp.tau * (lp.sigma**2 + lp.mu**2) / len(draws))
    assert abs(draws.mean() - want) < 4 * se


@pytest.mark.parametrize(
    "mu,gamma,tau,n_draws",
    [(0.0, 0.0, 2.0, 100_000), (1.0, 0.0, 2.0, 100_000), (0.0, 1.0, 2.0, 50_000)],
)
def test_series_oracle_ks_equivalence(mu, gamma, tau, n_draws):
    # truncated series vs conditional-Gaussian construction, indicator basis
    lp = LaplaceParams(mu=mu, sigma=1.0, gamma=gamma, tau=tau)
    trunc = SeriesTruncation(n_terms=2000, domain_measure=1.0)
    series = series_oracle_integral(lambda s: np.ones_like(s), lp, trunc,
                                    rng_of(21), size=n_draws)
    cond = sample_noise(lp, np.ones(n_draws), rng_of(22)).lam
    stat = stats.ks_2samp(series, cond, method="asymp").statistic
    crit = KS_CRIT_1PCT * np.sqrt(2.0 / n_draws)
    assert stat < crit


def mixture_logpdf_quadrature(lam_i, a_i, lp):
    """Direct 1-D quadrature of the normal-gamma mixture density."""
    from scipy.special import gammaln

    def integrand(g):
        return (
            np.exp(
                -((lam_i - lp.gamma_bar * a_i - lp.mu * g) ** 2) / (2 * lp.sigma**2 * g)
                + (lp.tau * a_i - 1.0) * np.log(g)
                - g
                - gammaln(lp.tau * a_i)
            )
            / np.sqrt(2 * np.pi * lp.sigma**2 * g)
        )

    val, _ = quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-12, limit=400)
    return np.log(val)


def test_noise_load_logpdf_matches_quadrature():
    lp = LaplaceParams.from_gamma_bar(mu=1.0, sigma=1.0, gamma_bar=0.2, tau=1.5)
    got = noise_load_logpdf(1.3, 1.0, lp)
    want = mixture_logpdf_quadrature(1.3, 1.0, lp)
    assert_allclose(got, want, rtol=1e-8)


def test_noise_load_logpdf_normalizes():
    lp = LaplaceParams(mu=0.5, sigma=1.0, gamma=0.0, tau=2.0)
    grid = np.linspace(-25, 40, 20001)
    dens = np.exp([noise_load_logpdf(v, 1.0, lp) for v in grid])
    assert_allclose(np.trapezoid(dens, grid), 1.0, atol=1e-4)


def test_noise_load_logpdf_symmetric_when_centered():
    lp = LaplaceParams(mu=0.0, sigma=1.0, gamma=0.0, tau=1.2)
    for v in (0.3, 1.1, 2.7):
        assert_allclose(noise_load_logpdf(v, 1.0, lp),
                        noise_load_logpdf(-v, 1.0, lp), rtol=1e-13)


def test_noise_load_logpdf_pole_signal():
    lp = LaplaceParams(mu=0.0, sigma=1.0, gamma=0.0, tau=0.4)
    with pytest.raises(PoleError):
        noise_load_logpdf(0.0, 1.0, lp)   # tau*a <= 1/2 at the center
    # finite at the center for tau*a > 1/2
    lp2 = LaplaceParams(mu=0.0, sigma=1.0, gamma=0.0, tau=2.0)
    want = mixture_logpdf_quadrature(1e-13, 1.0, lp2)
    assert_allclose(noise_load_logpdf(0.0, 1.0, lp2), want, rtol=1e-6)


def test_noise_load_logpdf_derivative_matches_fd():
    lp = LaplaceParams(mu=0.7, sigma=0.9, gamma=0.1, tau=1.8)
    x0, h = 1.7, 1e-5
    fd_der = (noise_load_logpdf(x0 + h, 1.0, lp) - noise_load_logpdf(x0 - h, 1.0, lp)) / (2 * h)
    hh = 1e-6
    quad_der = (
        mixture_logpdf_quadrature(x0 + hh, 1.0, lp)
        - mixture_logpdf_quadrature(x0 - hh, 1.0, lp)
    ) / (2 * hh)
    assert_allclose(fd_der, quad_der, rtol=1e-5)
