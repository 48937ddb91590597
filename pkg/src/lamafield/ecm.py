"""ECM maximum-likelihood estimation of (kappa, sigma, mu, gamma_bar, tau).

E-step: posterior moments of the latent gamma variances through Bessel
ratios.  CM-step 1 updates the noise parameters in closed form (mu,
gamma_bar, sigma) and by bounded maximization (tau); CM-step 2 updates
kappa by bounded maximization of the profiled loss with the loads
re-formed as a function of the trial kappa.  Early iterations clamp
E[1/Gamma] to a growing bound, which tames the unbounded-likelihood pole
for small tau.
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from . import kernels
from .errors import NumericError, ValidationError
from .fem import FemDiscretization
from .specfun import inverse_digamma

__all__ = [
    "Theta",
    "EcmConfig",
    "EcmState",
    "expected_gamma",
    "expected_inv_gamma",
    "expected_log_gamma",
    "cm_step_noise",
    "cm_step_kappa",
    "observed_loglik",
    "ecm_fit",
    "empirical_range",
]


class Theta(NamedTuple):
    kappa: float
    sigma: float
    mu: float
    gamma_bar: float
    tau: float


@dataclass(frozen=True)
class EcmConfig:
    """Controls of the ECM loop; defaults follow the estimation protocol."""

    eps_order_fd: float = 1e-5
    max_iters: int = 5000
    rel_tol: float = 1e-7
    trunc0: float = 1000.0
    trunc_growth: float = 10.0
    trunc_off: float = 1e12
    kappa_bounds: tuple | None = None   # default: warm-start kappa * 1e-2..1e2
    tau_bounds: tuple | None = None     # default: initial tau * 1e-3..1e3
    init_steps: int = 100
    brent_xatol: float = 1e-10
    brent_maxiter: int = 300

    def __post_init__(self):
        if min(self.eps_order_fd, self.rel_tol, self.trunc0, self.brent_xatol) <= 0:
            raise ValidationError("tolerances must be positive")
        if self.trunc_growth <= 1.0:
            raise ValidationError("trunc_growth must exceed 1")
        if self.max_iters < 1 or self.init_steps < 0:
            raise ValidationError("iteration counts out of range")
        for b in (self.kappa_bounds, self.tau_bounds):
            if b is not None and not (0 < b[0] < b[1]):
                raise ValidationError("bounds must be ordered and positive")


@dataclass
class EcmState:
    """Mutable loop state: current parameters, loads, expectations, trace."""

    theta: Theta
    lam: np.ndarray
    e_gamma: np.ndarray
    e_inv_gamma: np.ndarray
    e_log_gamma: np.ndarray
    trunc_bound: float
    loglik_trace: list = field(default_factory=list)
    iter: int = 0
    flags: list = field(default_factory=list)


# -- conditional expectations ------------------------------------------------

def _moments(lam, a, theta: Theta, eps, trunc_bound):
    return kernels.conditional_moments(
        np.asarray(lam, dtype=float), np.asarray(a, dtype=float),
        theta.sigma, theta.mu, theta.gamma_bar, theta.tau, eps, trunc_bound,
    )


def expected_gamma(lam_i: float, a_i: float, theta: Theta) -> float:
    """Posterior mean of a latent gamma variance given its load."""
    eg, _, _ = _moments([lam_i], [a_i], theta, 1e-5, np.inf)
    return float(eg[0])


def expected_inv_gamma(lam_i: float, a_i: float, theta: Theta,
                       trunc_bound: float = np.inf) -> float:
    """Posterior mean of the inverse variance, clamped to trunc_bound."""
    _, eig, _ = _moments([lam_i], [a_i], theta, 1e-5, trunc_bound)
    return float(eig[0])


def expected_log_gamma(lam_i: float, a_i: float, theta: Theta,
                       eps: float = 1e-5) -> float:
    """Posterior mean of the log variance (forward difference in the order)."""
    _, _, elg = _moments([lam_i], [a_i], theta, eps, np.inf)
    return float(elg[0])


# -- loads as a function of kappa ---------------------------------------------

class LoadsMap:
    """Evaluates loads(kappa) = Ct K_alpha(kappa) Phi^{-1} X efficiently.

    alpha = 2 reduces to a linear form in kappa^2; other even alpha use
    sparse matvecs; fractional alpha the precomputed eigenbasis.
    """

    def __init__(self, X, fd: FemDiscretization, alpha: float):
        self.fd = fd
        self.alpha = alpha
        phi = fd.phi.tocsc()
        diag = phi.diagonal()
        if phi.nnz != fd.n or np.any(diag == 0):
            raise ValidationError(
                "estimation requires a one-to-one node/observation map "
                "(diagonal invertible Phi)"
            )
        self.x_nodes = np.asarray(X, dtype=float) / diag
        self.log_det_phi = float(np.sum(np.log(np.abs(diag))))
        self.even = alpha == int(alpha) and int(alpha) % 2 == 0
        if alpha == 2:
            self._u = fd.a * self.x_nodes
            self._v = fd.G @ self.x_nodes
        elif not self.even:
            lam, U = fd.eig
            sqrt_a = np.sqrt(fd.a)
            self._z = U.T @ (sqrt_a * self.x_nodes)
            self._W = sqrt_a[:, None] * U
            self._lam = lam

    def __call__(self, kappa: float) -> np.ndarray:
        fd, alpha = self.fd, self.alpha
        if alpha == 2:
            return kappa**2 * self._u + self._v
        if self.even:
            t = self.x_nodes
            K = (kappa**2 * sp.diags(fd.a) + fd.G).tocsr()
            for _ in range(int(alpha) // 2):
                t = (K @ t) / fd.a
            return fd.a * t
        lam, _ = self.fd.eig
        return self._W @ ((self._lam + kappa**2) ** (alpha / 2.0) * self._z)


# -- CM steps ------------------------------------------------------------------

def _noise_sums(lam, a, e_gamma, e_inv_gamma):
    d = e_inv_gamma
    return {
        "l1": float(lam.sum()),
        "a1": float(a.sum()),
        "aDa": float((a * d * a).sum()),
        "lDa": float((lam * d * a).sum()),
        "lDl": float((lam * d * lam).sum()),
        "Eg": float(e_gamma.sum()),
    }


def noise_loss(lam, a, e_gamma, e_inv_gamma, e_log_gamma, sigma, mu, gamma_bar, tau):
    """The printed loss restricted to its noise-parameter terms.

    Used by the runtime non-decrease assertion and the stationarity
    tests; the kappa-only terms are constant here and omitted.
    """
    n = len(lam)
    r = lam - gamma_bar * a
    quad = (
        float((r * e_inv_gamma * r).sum())
        + mu**2 * float(e_gamma.sum())
        + 2.0 * gamma_bar * mu * float(a.sum())
        - 2.0 * mu * float(lam.sum())
    )
    tau_part = float((tau * a * e_log_gamma - gammaln(tau * a)).sum())
    return -n * np.log(sigma) - quad / (2.0 * sigma**2) + tau_part


def tau_objective(tau, a, e_log_gamma):
    return float((tau * a * e_log_gamma - gammaln(tau * a)).sum())


def update_tau(a, e_log_gamma, bounds, config: EcmConfig, method: str = "brent"):
    """Maximize the tau part of the loss.

    method "brent" is the general bounded search; "digamma" the
    closed form for meshes with all lumped masses equal.
    """
    if method == "digamma":
        if not np.allclose(a, a[0], rtol=1e-12, atol=0):
            raise ValidationError("digamma tau update needs uniform lumped masses")
        tau = float(inverse_digamma(float(np.mean(e_log_gamma)))) / float(a[0])
        return float(np.clip(tau, *bounds))
    res = minimize_scalar(
        lambda t: -tau_objective(t, a, e_log_gamma),
        bounds=bounds, method="bounded",
        options={"xatol": config.brent_xatol, "maxiter": config.brent_maxiter},
    )
    return float(res.x)


def cm_step_noise(state: EcmState, a, config: EcmConfig, tau_bounds,
                  tau_method: str = "brent"):
    """Closed-form mu/gamma_bar/sigma updates plus the tau maximization.

    Falls back to the previous values (with a flag) on a degenerate
    normal-equation denominator, and asserts that the loss did not
    decrease.
    """
    lam = state.lam
    th = state.theta
    s = _noise_sums(lam, a, state.e_gamma, state.e_inv_gamma)
    den = s["Eg"] * s["aDa"] - s["a1"] ** 2
    flags = []
    if den <= 0 or not np.isfinite(den):
        flags.append("degenerate_noise_step")
        mu, gamma_bar, sigma = th.mu, th.gamma_bar, th.sigma
    else:
        mu = (s["l1"] * s["aDa"] - s["a1"] * s["lDa"]) / den
        gamma_bar = (s["Eg"] * s["lDa"] - s["l1"] * s["a1"]) / den
        rss = (
            s["lDl"]
            + 2.0 * s["lDa"] * s["l1"] * s["a1"] / den
            - (s["lDa"] ** 2 * s["Eg"] + s["aDa"] * s["l1"] ** 2) / den
        )
        if rss <= 0 or not np.isfinite(rss):
            flags.append("degenerate_noise_step")
            mu, gamma_bar, sigma = th.mu, th.gamma_bar, th.sigma
        else:
            sigma = float(np.sqrt(rss / len(lam)))
    tau = update_tau(a, state.e_log_gamma, tau_bounds, config, tau_method)

    q_old = noise_loss(lam, a, state.e_gamma, state.e_inv_gamma,
                       state.e_log_gamma, th.sigma, th.mu, th.gamma_bar, th.tau)
    q_new = noise_loss(lam, a, state.e_gamma, state.e_inv_gamma,
                       state.e_log_gamma, sigma, mu, gamma_bar, tau)
    if q_new < q_old - 1e-8 * max(1.0, abs(q_old)):
        flags.append("noise_step_decreased_loss")
        mu, gamma_bar, sigma, tau = th.mu, th.gamma_bar, th.sigma, th.tau
    return mu, gamma_bar, sigma, tau, flags


def kappa_objective(kappa, loads_map: LoadsMap, fd: FemDiscretization, alpha,
                    e_inv_gamma, sigma, mu, gamma_bar):
    """Profiled loss in kappa: log-det term plus the load-dependent bracket."""
    lam_k = loads_map(kappa)
    bracket = (
        float((lam_k * e_inv_gamma * lam_k).sum())
        - 2.0 * gamma_bar * float((lam_k * e_inv_gamma * fd.a).sum())
        - 2.0 * mu * float(lam_k.sum())
    )
    lam_eigs, _ = fd.eig
    log_det = alpha / 2.0 * float(np.sum(np.log(lam_eigs + kappa**2)))
    return log_det - bracket / (2.0 * sigma**2)


def cm_step_kappa(state: EcmState, loads_map: LoadsMap, fd: FemDiscretization,
                  alpha, config: EcmConfig, kappa_bounds):
    """Bounded maximization of the kappa loss with expectations frozen."""
    th = state.theta
    res = minimize_scalar(
        lambda k: -kappa_objective(k, loads_map, fd, alpha, state.e_inv_gamma,
                                   th.sigma, th.mu, th.gamma_bar),
        bounds=kappa_bounds, method="bounded",
        options={"xatol": config.brent_xatol, "maxiter": config.brent_maxiter},
    )
    kappa = float(res.x)
    flags = []
    lo, hi = kappa_bounds
    if kappa < lo * 1.001 or kappa > hi * 0.999:
        flags.append("kappa_at_bound")
    return kappa, flags


def observed_loglik(theta: Theta, X, fd: FemDiscretization, alpha: float,
                    loads_map: LoadsMap | None = None) -> float:
    """Log density of the observed field under the discretized model.

    Sum of the marginal load log-densities plus the log Jacobian of the
    load map; +inf indicates a pole of the unbounded likelihood.
    """
    if loads_map is None:
        loads_map = LoadsMap(X, fd, alpha)
    lam = loads_map(theta.kappa)
    lp = kernels.noise_load_logpdf_vec(
        lam, fd.a, theta.sigma, theta.mu, theta.gamma_bar, theta.tau
    )
    lam_eigs, _ = fd.eig
    log_jac = (
        float(np.sum(np.log(fd.a)))
        + alpha / 2.0 * float(np.sum(np.log(lam_eigs + theta.kappa**2)))
        - loads_map.log_det_phi
    )
    return float(lp.sum()) + log_jac


def empirical_range(x) -> float:
    """First lag where the empirical autocorrelation drops below 0.1.

    Linear interpolation between the straddling lags; the lag unit is the
    observation spacing.
    """
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0:
        raise NumericError("constant field has no empirical range")
    n = len(x)
    acf = np.correlate(xc, xc, "full")[n - 1:] / denom
    below = np.nonzero(acf < 0.1)[0]
    if len(below) == 0:
        return float(n - 1)
    k = int(below[0])
    if k == 0:
        return 1.0
    return k - 1 + (acf[k - 1] - 0.1) / (acf[k - 1] - acf[k])


def _trunc_bound(config: EcmConfig, j: int) -> float:
    # growth is clamped well past the disable threshold to avoid float pow overflow
    b = config.trunc0 * float(np.power(config.trunc_growth, min(j, 256.0)))
    return np.inf if not np.isfinite(b) or b >= config.trunc_off else b


def ecm_fit(X, fd: FemDiscretization, alpha: float, config: EcmConfig,
            rng: np.random.Generator, spacing: float = 1.0,
            theta0: Theta | None = None):
    """Full estimation run: warm start with frozen kappa, then ECM.

    kappa starts at sqrt(8 nu)/r_hat with r_hat the empirical range; the
    other parameters start from the protocol's random draws unless theta0
    is given.  Returns (theta_hat, trace) where trace has one record per
    iteration.
    """
    X = np.asarray(X, dtype=float)
    d = fd.mesh.dimension
    nu = alpha - d / 2.0
    if nu <= 0:
        raise ValidationError("alpha must exceed d/2")

    if theta0 is None:
        r_hat = empirical_range(X) * spacing
        kappa0 = float(np.sqrt(8.0 * nu) / r_hat)
        mu0 = float(rng.standard_normal())
        gamma0 = float(rng.standard_normal())
        sigma0 = float(rng.chisquare(1))
        tau0 = float(1.0 / rng.chisquare(1))
        sigma0 = max(sigma0, 1e-6)
        tau0 = min(max(tau0, 1e-6), 1e6)
        theta = Theta(kappa0, sigma0, mu0, gamma0 * tau0, tau0)
    else:
        theta = theta0

    kappa_bounds = config.kappa_bounds or (theta.kappa * 1e-2, theta.kappa * 1e2)
    tau_bounds = config.tau_bounds or (theta.tau * 1e-3, theta.tau * 1e3)

    loads_map = LoadsMap(X, fd, alpha)
    state = EcmState(
        theta=theta, lam=loads_map(theta.kappa),
        e_gamma=np.empty(fd.n), e_inv_gamma=np.empty(fd.n),
        e_log_gamma=np.empty(fd.n), trunc_bound=config.trunc0,
    )
    trace = []
    converged = False

    for it in range(config.init_steps + config.max_iters):
        warm = it < config.init_steps
        bound = _trunc_bound(config, it)
        state.trunc_bound = bound
        state.lam = loads_map(state.theta.kappa)
        eg, eig, elg = _moments(state.lam, fd.a, state.theta,
                                config.eps_order_fd, bound)
        state.e_gamma, state.e_inv_gamma, state.e_log_gamma = eg, eig, elg

        mu, gamma_bar, sigma, tau, flags = cm_step_noise(
            state, fd.a, config, tau_bounds
        )
        state.theta = state.theta._replace(
            mu=mu, gamma_bar=gamma_bar, sigma=sigma, tau=tau
        )
        if not warm:
            kappa, kflags = cm_step_kappa(state, loads_map, fd, alpha, config,
                                          kappa_bounds)
            state.theta = state.theta._replace(kappa=kappa)
            flags += kflags

        ll = observed_loglik(state.theta, X, fd, alpha, loads_map)
        if not np.isfinite(ll):
            err = NumericError("ECM objective diverged")
            err.trace = trace
            raise err
        state.loglik_trace.append(ll)
        state.iter = it + 1
        trace.append({
            "iter": it, "phase": "warm" if warm else "full",
            "theta": tuple(state.theta), "loglik": ll,
            "trunc_bound": bound if np.isfinite(bound) else None,
            "flags": flags,
        })
        state.flags += flags

        if not warm:
            prev = np.array(trace[-2]["theta"]) if len(trace) > 1 else None
            cur = np.array(tuple(state.theta))
            if prev is not None and trace[-2]["phase"] == "full":
                rel = np.max(np.abs(cur - prev) / np.maximum(np.abs(prev), 0.05))
                if rel < config.rel_tol:
                    converged = True
                    break

    if not converged:
        state.flags.append("max_iters_reached")
    return state.theta, trace
