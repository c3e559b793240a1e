"""Exact power as the last group's rate moves away from the others, for each method."""

import argparse

import numpy as np

from bilateral_exact.enumerate import Design
from bilateral_exact.exact import METHODS
from bilateral_exact.study import PValueCache, power_curve


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--g", type=int, default=2)
    parser.add_argument("--m", type=int, default=5)
    parser.add_argument("--n", type=int, default=5)
    parser.add_argument("--pi1", type=float, default=0.25)
    parser.add_argument("--R", type=float, default=1.0)
    parser.add_argument("--methods", default=",".join(METHODS))
    parser.add_argument("--alpha", type=float, default=0.05)
    args = parser.parse_args()

    design = Design.balanced(args.g, args.m, args.n)
    grid = np.round(np.arange(0.05, 1.0, 0.05), 2)
    cache = PValueCache()
    curves = {m: power_curve(design, m, [args.pi1] * (args.g - 1), args.R, grid, args.alpha, cache) for m in args.methods.split(",")}
    print("pi_g  " + "  ".join(f"{m:>6}" for m in curves))
    for k, pg in enumerate(grid):
        print(f"{pg:4.2f}  " + "  ".join(f"{c.power[k]:6.4f}" for c in curves.values()))


if __name__ == "__main__":
    main()
