"""Exact size over a (pi, rho) grid for several methods; writes long-format CSV and prints class fractions."""

import argparse
import sys

from bilateral_exact.enumerate import Design
from bilateral_exact.exact import ExactConfig
from bilateral_exact.study import PValueCache, StudyConfig, size_grid, to_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--g", type=int, default=2)
    parser.add_argument("--m", type=int, default=10)
    parser.add_argument("--n", type=int, default=5)
    parser.add_argument("--methods", default="A,E,C")
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--pi-step", type=float, default=0.1)
    parser.add_argument("--rho", default="0,0.3,0.6")
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--out", default="-")
    args = parser.parse_args()

    design = Design.balanced(args.g, args.m, args.n)
    steps = int(round(1 / args.pi_step))
    pis = [round(k * args.pi_step, 6) for k in range(1, steps)]
    rhos = [float(v) for v in args.rho.split(",")]
    cache = PValueCache(StudyConfig(exact=ExactConfig(alpha=args.alpha), threads=args.threads))
    rows = []
    for method in args.methods.split(","):
        grid = size_grid(design, method, pis, rhos, args.alpha, cache)
        rows += grid.rows()
        frac = grid.fractions()
        print(f"{method:>3}: " + "  ".join(f"{k} {v:.3f}" for k, v in frac.items()), file=sys.stderr)
    text = to_csv(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
