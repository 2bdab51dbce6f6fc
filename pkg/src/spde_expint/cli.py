"""Command line entry point for the convergence experiments.

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures (non-finite fields or a propagator that did not converge).
"""

import argparse
import dataclasses
import logging
import sys

from .backend import kernel_backend
from .errors import ConfigError, NumericalError
from .harness import (ExperimentConfig, SpatialConfig, config_from_file,
                      run_experiment, spatial_experiment, write_csv)

log = logging.getLogger(__name__)


def _parse_dt(text):
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _add_common(parser):
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--beta", type=float, action="append", default=None,
                        metavar="B", help="noise decay exponent (repeatable)")
    parser.add_argument("--realizations", type=int, default=None, metavar="R")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default 1)")
    parser.add_argument("--tol", type=float, default=None, dest="matfunc_tol",
                        help="matrix function tolerance")
    parser.add_argument("--out", default=None, metavar="FILE",
                        help="output CSV path, '-' for stdout")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spde-expint",
        description="strong convergence experiments for a semilinear "
                    "parabolic SPDE on a rectangle")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="temporal convergence experiment")
    _add_common(run)
    run.add_argument("--grid", type=int, default=None, metavar="N",
                     help="mesh cells per side")
    run.add_argument("--dt-list", default=None, metavar="DT[,DT...]",
                     help="coarse steps, e.g. 1/16,1/32,1/64")
    run.add_argument("--dt-ref", default=None, metavar="DT",
                     help="reference step, e.g. 1/1024")
    run.add_argument("--scheme", choices=("expeuler", "semiimplicit"),
                     default=None)
    run.add_argument("--drift", choices=("none", "kink"), default=None)
    run.add_argument("--flow", choices=("none", "darcy"), default=None)
    upwind = run.add_mutually_exclusive_group()
    upwind.add_argument("--upwind", dest="upwind", action="store_true",
                        default=None)
    upwind.add_argument("--no-upwind", dest="upwind", action="store_false")
    run.add_argument("--modes", type=int, default=None, metavar="N",
                     help="noise truncation per direction")

    spatial = sub.add_parser("spatial", help="spatial convergence experiment")
    _add_common(spatial)
    spatial.add_argument("--nx-list", default=None, metavar="N[,N...]",
                         help="mesh doubling chain, e.g. 4,8,16,32")
    spatial.add_argument("--dt", default=None, metavar="DT")
    spatial.add_argument("--ref-modes", type=int, default=None, metavar="N")
    return parser


def _config_from_args(args):
    if args.command == "run":
        config = ExperimentConfig()
        if args.config:
            config = config_from_file(args.config, base=config)
        updates = {}
        if args.beta is not None:
            updates["betas"] = tuple(args.beta)
        if args.grid is not None:
            updates["grid_nx"] = updates["grid_ny"] = args.grid
        if args.dt_list is not None:
            updates["dt_list"] = tuple(_parse_dt(tok) for tok in
                                       args.dt_list.split(","))
        if args.dt_ref is not None:
            updates["dt_ref"] = _parse_dt(args.dt_ref)
        if args.scheme is not None:
            updates["scheme"] = args.scheme
        if args.drift is not None:
            updates["drift"] = args.drift
        if args.flow is not None:
            updates["flow"] = args.flow
        if args.upwind is not None:
            updates["upwind"] = args.upwind
        if args.modes is not None:
            updates["noise_n1"] = updates["noise_n2"] = args.modes
    else:
        config = SpatialConfig()
        if args.config:
            config = config_from_file(args.config, base=config)
        updates = {}
        if args.beta is not None:
            updates["betas"] = tuple(args.beta)
        if args.nx_list is not None:
            updates["nx_list"] = tuple(int(tok) for tok in
                                       args.nx_list.split(","))
        if args.dt is not None:
            updates["dt"] = _parse_dt(args.dt)
        if args.ref_modes is not None:
            updates["ref_modes"] = args.ref_modes
    for name in ("realizations", "seed", "workers", "matfunc_tol", "out"):
        value = getattr(args, name)
        if value is not None:
            updates[name] = value
    return dataclasses.replace(config, **updates).validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config_from_args(args)
    except (ConfigError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    log.info("kernel backend: %s", kernel_backend())
    try:
        if args.command == "run":
            report = run_experiment(config)
        else:
            report = spatial_experiment(config)
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return 3
    log.info("finished in %.1f s", report.wall_time)
    if config.out == "-":
        write_csv(report, config, sys.stdout)
    else:
        with open(config.out, "w", encoding="utf-8", newline="\n") as fh:
            write_csv(report, config, fh)
        log.info("wrote %s", config.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
