"""Command-line interface.

Subcommands: simulate, density, estimate, study, matrices.  Exit status
0 on success, 1 on validation/usage errors, 2 on numeric errors.  CSV
output uses shortest round-trip decimals; JSON output is deterministic
(sorted keys, no volatile fields).
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .ecm import EcmConfig, ecm_fit
from .errors import NumericError, ValidationError
from .fem import assemble, build_mesh_1d, build_mesh_2d, mesh_from_nodes_1d
from .matern import LaplaceParams, MaternParams, QuadSpec, marginal_density
from .sampler import simulate_laplace
from .study import TABLE_CASES, run_case, study_case

__all__ = ["main", "cli_dispatch"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt(x) -> str:
    """Shortest decimal that round-trips the IEEE-754 double."""
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_grid(spec: str) -> np.ndarray:
    try:
        start, step, stop = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ValidationError("grid must look like start:step:stop") from None
    if step <= 0 or stop <= start:
        raise ValidationError("grid must be increasing with positive step")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _apply_config_file(args):
    """--config JSON overrides same-named flag values."""
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        for key, val in overrides.items():
            setattr(args, key, val)
    return args


def _laplace_params(args) -> LaplaceParams:
    return LaplaceParams(mu=args.mu, sigma=args.sigma, gamma=args.gamma, tau=args.tau)


def _matern_params(args) -> MaternParams:
    lp = _laplace_params(args)
    return MaternParams.from_alpha(args.alpha, args.kappa, phi2=lp.phi2, d=args.d)


def _add_model_flags(p, with_noise=True):
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d", type=int, default=1, choices=(1, 2))
    if with_noise:
        p.add_argument("--mu", type=float, default=0.0)
        p.add_argument("--gamma", type=float, default=0.0)
        p.add_argument("--sigma", type=float, default=1.0)
        p.add_argument("--tau", type=float, default=1.0)


def _cmd_simulate(args):
    args = _apply_config_file(args)
    if args.d != 1:
        raise ValidationError("simulate CLI currently emits 1-D fields")
    mesh = build_mesh_1d(args.x0, args.n, args.spacing)
    fd = assemble(mesh)
    mp = _matern_params(args)
    lp = _laplace_params(args)
    rows = []
    for rep in range(args.replicates):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(args.seed, spawn_key=(rep,)))
        )
        sample = simulate_laplace(mp, lp, fd, rng)
        if args.replicates == 1:
            rows.extend(zip(mesh.nodes, sample.values))
        else:
            rows.extend((rep, loc, val) for loc, val in zip(mesh.nodes, sample.values))
    header = ["location", "value"] if args.replicates == 1 else ["replicate", "location", "value"]
    _write_csv(args.out, header, rows)
    return 0


def _cmd_density(args):
    args = _apply_config_file(args)
    grid = _parse_grid(args.grid)
    mp = _matern_params(args)
    lp = _laplace_params(args)
    dens = marginal_density(grid, lp, mp, QuadSpec())
    _write_csv(args.out, ["x", "density"], zip(grid, dens))
    return 0


def _cmd_estimate(args):
    args = _apply_config_file(args)
    data = np.genfromtxt(args.input, delimiter=",", names=True)
    locs = np.asarray(data["location"], dtype=float)
    vals = np.asarray(data["value"], dtype=float)
    order = np.argsort(locs)
    locs, vals = locs[order], vals[order]
    mesh = mesh_from_nodes_1d(locs)
    fd = assemble(mesh)
    cfg_fields = set(EcmConfig.__dataclass_fields__)
    cfg_kwargs = {k: v for k, v in vars(args).items() if k in cfg_fields and v is not None}
    if "kappa_bounds" in cfg_kwargs:
        cfg_kwargs["kappa_bounds"] = tuple(cfg_kwargs["kappa_bounds"])
    if "tau_bounds" in cfg_kwargs:
        cfg_kwargs["tau_bounds"] = tuple(cfg_kwargs["tau_bounds"])
    config = EcmConfig(**cfg_kwargs)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    spacing = float(np.median(np.diff(locs)))
    theta, trace = ecm_fit(vals, fd, args.alpha, config, rng, spacing=spacing)
    payload = {
        "theta_hat": {
            "kappa": theta.kappa, "sigma": theta.sigma, "mu": theta.mu,
            "gamma_bar": theta.gamma_bar, "tau": theta.tau,
            "gamma": theta.gamma_bar / theta.tau,
        },
        "alpha": args.alpha,
        "d": args.d,
        "seed": args.seed,
        "n_obs": int(len(vals)),
        "iterations": len(trace),
        "converged": not any("max_iters_reached" in t["flags"] for t in trace[-1:]),
        "loglik_trace": [t["loglik"] for t in trace],
        "flags": sorted({f for t in trace for f in t["flags"]}),
    }
    _write_json(args.out, payload)
    return 0


def _cmd_study(args):
    args = _apply_config_file(args)
    if args.print_cases:
        for label, case in TABLE_CASES.items():
            print(f"{label}: kappa={case.kappa:g} tau={case.tau:g} "
                  f"sigma={case.sigma:g} mu={case.mu:g} gamma={case.gamma:g}")
        return 0
    if args.case is None:
        raise ValidationError("--case is required unless --print-cases is given")
    case = study_case(args.case, replicates=args.replicates)
    config = EcmConfig()
    result = run_case(case, config, seed=args.seed, jobs=args.jobs)
    payload = {
        "case": case.label,
        "theta_true": case.theta_true,
        "replicates": case.replicates,
        "n_obs": case.n_obs,
        "alpha": case.alpha,
        "master_seed": result.master_seed,
        "percentiles": result.percentiles,
        "estimates": [[float(v) for v in row] for row in result.estimates],
        "estimate_columns": ["kappa", "tau", "sigma", "mu", "gamma"],
        "failures": result.failures,
    }
    _write_json(args.out, payload)
    return 0


def _cmd_matrices(args):
    args = _apply_config_file(args)
    if args.d == 1:
        mesh = build_mesh_1d(args.x0, args.n, args.spacing)
    else:
        mesh = build_mesh_2d((0.0, args.spacing * (args.nx - 1),
                              0.0, args.spacing * (args.ny - 1)), args.nx, args.ny)
    fd = assemble(mesh)
    prefix = args.out_prefix
    n = fd.n
    _write_csv(f"{prefix}_C.csv", [f"c{j}" for j in range(n)], fd.C.toarray())
    _write_csv(f"{prefix}_G.csv", [f"g{j}" for j in range(n)], fd.G.toarray())
    _write_csv(f"{prefix}_a.csv", ["a"], [[v] for v in fd.a])
    lam, _ = fd.eig
    _write_csv(f"{prefix}_eigenvalues.csv", ["lambda"], [[v] for v in lam])
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lamafield",
                     description="Laplace-driven Matern fields: simulation and estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate field replicates to CSV")
    _add_model_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file overriding flags")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("density", help="marginal density on a grid to CSV")
    _add_model_flags(p)
    p.add_argument("--grid", required=True, help="start:step:stop")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file overriding flags")
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("estimate", help="ECM fit from a (location,value) CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--d", type=int, default=1, choices=(1,))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file overriding flags/EcmConfig")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("study", help="simulation study for a benchmark case")
    p.add_argument("--case", help="A..L")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int,
                   default=int(os.environ.get("LAMAFIELD_JOBS", "1")))
    p.add_argument("--out", default="study.json")
    p.add_argument("--print-cases", action="store_true")
    p.add_argument("--config", help="JSON file overriding flags")
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("matrices", help="dump C, G, a, eigenvalues as CSV")
    p.add_argument("--d", type=int, default=1, choices=(1, 2))
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--nx", type=int, default=5)
    p.add_argument("--ny", type=int, default=5)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--config", help="JSON file overriding flags")
    p.set_defaults(func=_cmd_matrices)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))
