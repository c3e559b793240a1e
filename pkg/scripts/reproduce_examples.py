"""All six p-values for the two bundled example datasets, next to reference values."""

import argparse
import time
from pathlib import Path

from bilateral_exact.cli import read_dataset
from bilateral_exact.exact import METHODS, ExactConfig, run_methods

DATA = Path(__file__).resolve().parent.parent / "data"
REFERENCE = {
    "example_a.csv": {"A": 0.2257, "E": 0.1821, "M": 0.2386, "EM": 0.3076, "CI": 0.2342, "C": 0.3010},
    "example_b.csv": {"A": 0.4144, "E": 0.4513, "M": 0.4874, "EM": 0.6310, "CI": 0.4511, "C": 0.3846},
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--beta", type=float, default=0.001)
    parser.add_argument("--full-domain", action="store_true")
    args = parser.parse_args()
    cfg = ExactConfig(beta=args.beta, nonnegative_rho=not args.full_domain)
    for name, ref in REFERENCE.items():
        data = read_dataset(DATA / name)
        start = time.perf_counter()
        results = run_methods(data, METHODS, cfg)
        print(f"{name}  ({time.perf_counter() - start:.1f} s)")
        print(f"  {'method':<6} {'computed':>9} {'reference':>10} {'diff':>8}")
        for r in results:
            print(f"  {r.method:<6} {r.p_value:9.4f} {ref[r.method]:10.4f} {r.p_value - ref[r.method]:+8.4f}")


if __name__ == "__main__":
    main()
