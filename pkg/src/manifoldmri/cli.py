"""Command-line entry point.

Exit codes: 0 success, 1 missing upstream stage output, 2 configuration
error, 3 numerical failure.
"""

import argparse
import logging
import sys

import numpy as np

from . import pipeline
from .config import RunConfig, load_config
from .errors import ConfigError, NumericalError, StageDependencyError

COMMANDS = {
    "simulate": pipeline.cmd_simulate,
    "estimate": pipeline.cmd_estimate,
    "reconstruct": pipeline.cmd_reconstruct,
    "bin": pipeline.cmd_bin,
    "all": pipeline.cmd_all,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="manifoldmri", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=list(COMMANDS) + ["experiment"])
    ap.add_argument("--config", help="INI run configuration (defaults apply when omitted)")
    ap.add_argument("--seed", type=int, help="override [run] seed")
    ap.add_argument("--out", help="override [paths] out")
    ap.add_argument("--experiment", choices=pipeline.EXPERIMENTS, help="experiment name")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.paths.out = args.out
    return cfg.validate()


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "experiment":
            if not args.experiment:
                raise ConfigError("experiment: --experiment is required")
            files = pipeline.cmd_experiment(cfg, args.experiment)
        else:
            files = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageDependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
