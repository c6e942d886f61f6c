"""Command-line entry point.

Subcommands bind JSON configurations to the experiment drivers and print
a one-line summary. Exit codes: 0 success, 1 usage/config error, 2
solver non-convergence, 3 numerical failure. Configuration paths resolve
first against the filesystem, then against the bundled configs shipped
with the package (paper_10_1.json and friends).
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources

import numpy as np

from .errors import ConfigError, NumericalError
from .experiments import load_config, override_config
from . import experiments
from .measures import DiscreteMeasure
from .mesh import build_uniform
from .pdap import PdapConfig
from .timestepping import HeatModel, TimeGrid, adjoint_dirac, forward_dirac
from .timestepping import pade_step_oracle
from . import fem


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(
        prog="sparseheat",
        description=(
            "Recover point-source initial data of the heat equation from a "
            "final-time observation, and reproduce the convergence studies."
        ),
        epilog=(
            "Config keys: T, truth, mesh_n, time_steps, dg_order, alpha, "
            "noise_level, seed, pdap{tol, tol_mode, max_outer_iterations, "
            "subproblem_tol, subproblem_max_iterations, prune_threshold}, "
            "output_dir, smoothing{x0, sweep}. See docs/config.md."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, helptext, needs_config=True):
        p = sub.add_parser(name, help=helptext)
        if needs_config:
            p.add_argument("--config", required=True, help="config path or bundled name")
            p.add_argument("--out", default=None, help="output directory override")
            p.add_argument("--seed", type=int, default=None, help="RNG seed override")
            p.add_argument("--tol", type=float, default=None, help="PDAP gap tolerance override")
        p.add_argument("--threads", type=int, default=1, help="worker cap for study levels")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    add("reconstruct", "recover a sparse initial measure from the configured observation")
    add("study-space", "EOC study of the optimal state under mesh refinement")
    add("study-time", "EOC study of the optimal state under time-grid refinement")
    add("study-smoothing", "pointwise EOC study of the plain forward solver")
    add("selftest", "run the built-in adjoint-identity and step-oracle checks", needs_config=False)
    return parser


def _resolve_config(name):
    import os

    if os.path.exists(name):
        return name
    bundled = resources.files("sparseheat").joinpath("configs", name)
    if bundled.is_file():
        return str(bundled)
    raise ConfigError(f"config not found: {name}")


def _load(args):
    cfg = load_config(_resolve_config(args.config))
    cfg = override_config(cfg, output_dir=args.out, seed=args.seed, tol=args.tol)
    if cfg.output_dir is None:
        import os

        stem = os.path.splitext(os.path.basename(args.config))[0]
        cfg = override_config(cfg, output_dir=os.path.join("out", stem))
    return cfg


def _selftest(verbose=False):
    """Quick consistency checks on small discretizations. Returns failures."""
    failures = []

    def check(name, ok):
        line = f"selftest {name}: {'PASS' if ok else 'FAIL'}"
        print(line)
        if not ok:
            failures.append(name)

    # Step oracle against the exponential and the dG(0) closed form.
    check("dg0 step value", abs(pade_step_oracle(1.0, 0.5, 0) - 2.0 / 3.0) < 1e-15)
    ok = True
    for s in (1e-2, 1e-3):
        ok &= abs(pade_step_oracle(s, 1.0, 1) - np.exp(-s)) <= s**4
    check("dg1 step matches exp to third order", ok)

    # Adjoint identity on a small grid sweep.
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (4, 8):
        mesh = build_uniform(n)
        for M in (1, 4):
            for r in (0, 1):
                model = HeatModel(mesh, TimeGrid.uniform(0.1, M), r)
                for _ in range(3):
                    pos = 0.1 + 0.8 * rng.random((3, 2))
                    q = DiscreteMeasure(pos, rng.standard_normal(3))
                    g = fem.NodalField(mesh, rng.standard_normal(mesh.num_nodes))
                    sq = forward_dirac(model, q)
                    z = adjoint_dirac(model, g)
                    lhs = sum(b * fem.eval_field(mesh, z, p) for p, b in q)
                    rhs = fem.l2_inner(model.mass, sq, g)
                    tv = float(np.abs(q.coefficients).sum())
                    gn = fem.l2_norm(model.mass, g)
                    worst = max(worst, abs(lhs - rhs) / (tv * gn))
    check(f"adjoint identity (worst defect {worst:.2e})", worst <= 1e-10)
    return failures


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    try:
        if args.command == "selftest":
            return 3 if _selftest(args.verbose) else 0
        cfg = _load(args)
        if args.command == "reconstruct":
            report = experiments.reconstruct(cfg)
            print(
                f"reconstruct: support={len(report.measure)} "
                f"lumped={len(report.lumped)} objective={report.objective:.6g} "
                f"phi={report.gap:.3g} adjoint_max={report.adjoint_max:.6g} "
                f"out={cfg.output_dir}"
            )
            return 0 if report.converged else 2
        if args.command == "study-space":
            table, converged = experiments.study_space(cfg, workers=args.threads)
            print(
                f"study-space: slope={table.slope:.4g} levels={len(table.rows)} "
                f"out={cfg.output_dir}"
            )
            return 0 if converged else 2
        if args.command == "study-time":
            table, converged = experiments.study_time(cfg, workers=args.threads)
            print(
                f"study-time: slope={table.slope:.4g} levels={len(table.rows)} "
                f"out={cfg.output_dir}"
            )
            return 0 if converged else 2
        if args.command == "study-smoothing":
            table = experiments.study_smoothing(cfg, workers=args.threads)
            print(
                f"study-smoothing: slope={table.slope:.4g} levels={len(table.rows)} "
                f"out={cfg.output_dir}"
            )
            return 0
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
