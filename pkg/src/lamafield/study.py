"""Simulation-study runner: the twelve benchmark cases at desk scale.

Each case simulates replicates of the 1-D field on unit-spaced nodes,
estimates the parameters with the ECM protocol, and aggregates
10/50/90 percentiles.  Replicate k always draws from the stream spawned
as (master_seed, k), so inserting or dropping replicates never perturbs
the others.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .ecm import EcmConfig, Theta, ecm_fit
from .errors import LamafieldError, ValidationError
from .fem import assemble, build_mesh_1d
from .matern import LaplaceParams, MaternParams
from .sampler import simulate_laplace

__all__ = ["StudyCase", "StudyResult", "TABLE_CASES", "study_case", "run_case"]

PARAM_NAMES = ("kappa", "tau", "sigma", "mu", "gamma")


@dataclass(frozen=True)
class StudyCase:
    """One benchmark parameter row: true values plus the sampling layout."""

    label: str
    kappa: float
    tau: float
    sigma: float
    mu: float
    gamma: float
    n_obs: int = 1000
    spacing: float = 1.0
    alpha: float = 2.0
    d: int = 1
    replicates: int = 50

    @property
    def theta_true(self):
        return {
            "kappa": self.kappa, "tau": self.tau, "sigma": self.sigma,
            "mu": self.mu, "gamma": self.gamma,
        }


# label: (kappa, tau, sigma, mu, gamma)
_CASE_ROWS = {
    "A": (1.0, 2.0, 1.0, 0.0, 0.0),
    "B": (1.0, 2.0, 0.5, 0.5, 0.0),
    "C": (1.0, 1.0, 1.0, 0.0, 0.0),
    "D": (1.0, 1.0, 1.0, 1.0, -1.0),
    "E": (1.0, 0.5, 1.0, 0.0, 0.0),
    "F": (1.0, 0.5, 1.0, 1.0, -1.0),
    "G": (0.1, 1.0, 1.0, 0.0, 0.0),
    "H": (0.1, 1.0, 0.5, 0.5, 0.0),
    "I": (0.1, 0.5, 1.0, 0.0, 0.0),
    "J": (0.1, 0.5, 1.0, 1.0, -1.0),
    "K": (0.1, 1.0 / 3.0, 1.0, 0.0, 0.0),
    "L": (0.1, 1.0 / 3.0, 0.5, 0.5, 0.0),
}

TABLE_CASES = {
    label: StudyCase(label, *row) for label, row in _CASE_ROWS.items()
}


def study_case(label: str, **overrides) -> StudyCase:
    try:
        base = TABLE_CASES[label.upper()]
    except KeyError:
        raise ValidationError(f"unknown study case {label!r}; use A..L") from None
    if not overrides:
        return base
    from dataclasses import replace
    return replace(base, **overrides)


@dataclass(frozen=True)
class StudyResult:
    """Aggregated study output; percentiles are (10%, 50%, 90%) triples."""

    case: StudyCase
    master_seed: int
    estimates: np.ndarray        # (n_ok, 5) rows (kappa, tau, sigma, mu, gamma)
    percentiles: dict
    failures: list
    runtime_seconds: float


def replicate_rng(master_seed: int, k: int) -> np.random.Generator:
    """Counter-based stream for replicate k of a study."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(k,)))
    )


def run_replicate(case: StudyCase, config: EcmConfig, master_seed: int, k: int):
    """Simulate one data set and fit it; returns the estimate row."""
    rng = replicate_rng(master_seed, k)
    mesh = build_mesh_1d(case.spacing, case.n_obs, case.spacing)
    fd = assemble(mesh)
    mp = MaternParams.from_alpha(
        case.alpha, case.kappa,
        phi2=case.tau * (case.sigma**2 + case.mu**2), d=case.d,
    )
    lp = LaplaceParams(mu=case.mu, sigma=case.sigma, gamma=case.gamma, tau=case.tau)
    sample = simulate_laplace(mp, lp, fd, rng)
    theta, trace = ecm_fit(sample.values, fd, case.alpha, config, rng,
                           spacing=case.spacing)
    return {
        "kappa": theta.kappa, "tau": theta.tau, "sigma": theta.sigma,
        "mu": theta.mu, "gamma": theta.gamma_bar / theta.tau,
        "gamma_bar": theta.gamma_bar, "iters": len(trace),
    }


def _percentiles(rows: np.ndarray) -> dict:
    out = {}
    for j, name in enumerate(PARAM_NAMES):
        q = np.percentile(rows[:, j], [10, 50, 90])
        out[name] = [float(v) for v in q]
    return out


def run_case(case: StudyCase, config: EcmConfig, seed: int,
             jobs: int = 1) -> StudyResult:
    """Run all replicates of a case and aggregate percentile triples.

    Per-replicate failures are recorded, not fatal.  With jobs > 1 the
    replicates run on a process pool; results are keyed by replicate
    index, so scheduling never affects the output.
    """
    t0 = time.perf_counter()
    results = {}
    failures = []

    def _collect(k, payload, error):
        if error is None:
            results[k] = payload
        else:
            failures.append({"replicate": k, "error": error})

    if jobs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {
                pool.submit(run_replicate, case, config, seed, k): k
                for k in range(case.replicates)
            }
            for fut in cf.as_completed(futs):
                k = futs[fut]
                try:
                    _collect(k, fut.result(), None)
                except LamafieldError as exc:
                    _collect(k, None, str(exc))
    else:
        for k in range(case.replicates):
            try:
                _collect(k, run_replicate(case, config, seed, k), None)
            except LamafieldError as exc:
                _collect(k, None, str(exc))

    rows = np.array(
        [
            [results[k][name] for name in PARAM_NAMES]
            for k in sorted(results)
        ]
    )
    if rows.size == 0:
        raise LamafieldError(f"all replicates of case {case.label} failed")
    failures.sort(key=lambda f: f["replicate"])
    return StudyResult(
        case=case,
        master_seed=seed,
        estimates=rows,
        percentiles=_percentiles(rows),
        failures=failures,
        runtime_seconds=time.perf_counter() - t0,
    )
