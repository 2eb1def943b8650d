"""Simulate once, then run every experiment into one output directory.

Usage: python3 scripts/run_experiments.py [--config run.ini] [--out DIR] [--only navcount,methods]
"""

import argparse
import sys
import time

from manifoldmri import pipeline
from manifoldmri.config import RunConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="experiments")
    ap.add_argument("--only", default=",".join(pipeline.EXPERIMENTS))
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg.paths.out = args.out
    cfg.validate()
    pipeline.cmd_simulate(cfg)
    for name in filter(None, args.only.split(",")):
        t = time.perf_counter()
        files = pipeline.cmd_experiment(cfg, name)
        print(f"{name}: {files[0]} ({time.perf_counter() - t:.0f} s)")
        with open(f"{args.out}/{files[0]}") as fh:
            sys.stdout.write(fh.read())


if __name__ == "__main__":
    main()
