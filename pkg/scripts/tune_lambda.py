"""Sweep the relative regularization weight on the default phantom.

Usage: python3 scripts/tune_lambda.py [--seed S] [--grid 1e3,1e4,1e5]
"""

import argparse
import warnings

from manifoldmri import pipeline
from manifoldmri.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", default=",".join(f"{g:g}" for g in pipeline.LAMBDA_GRID))
    args = ap.parse_args()
    cfg = RunConfig()
    cfg.run.seed = args.seed
    cfg.validate()
    grid = [float(g) for g in args.grid.split(",")]
    d = pipeline.simulate_data(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows, _ = pipeline.run_lambda_sweep(cfg, d["truth"], d["meas"], grid)
    print("lambda_relative,nrmse")
    for lam, err in rows:
        print(f"{lam:g},{err:.5f}")
    best = min(rows, key=lambda r: r[1])
    print(f"best lambda_relative {best[0]:g} (nrmse {best[1]:.5f})")


if __name__ == "__main__":
    main()
