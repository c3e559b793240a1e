"""Command-line front end: ``test`` an observed table, ``size`` surfaces and ``power`` curves."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .enumerate import Design, space_size
from .exact import METHODS, CapacityError, ExactConfig, run_methods
from .mle import fit_null
from .model import Dataset, DomainError, GroupCounts, InputError
from .study import PValueCache, StudyConfig, power_curve, size_grid, to_csv, to_json

EXIT_OK, EXIT_INPUT, EXIT_CAPACITY, EXIT_NUMERIC = 0, 2, 3, 4
FIELDS = ("m0", "m1", "m2", "n0", "n1")


# -- input ------------------------------------------------------------------------------


def _parse_record(record: dict, where: str) -> tuple[str, GroupCounts]:
    missing = [k for k in ("group",) + FIELDS if k not in record]
    if missing:
        raise InputError(f"{where}: missing field(s) {', '.join(missing)}")
    values = []
    for k in FIELDS:
        raw = record[k]
        try:
            value = int(str(raw).strip())
        except ValueError:
            raise InputError(f"{where}: field {k}={raw!r} is not an integer") from None
        if value < 0:
            raise InputError(f"{where}: field {k}={raw!r} must be a nonnegative integer")
        values.append(value)
    return str(record["group"]), GroupCounts(*values)


def read_dataset(path: str | Path) -> Dataset:
    """Read ``group,m0,m1,m2,n0,n1`` records from CSV or a JSON array."""
    path = Path(path)
    text = path.read_text()
    records: list[tuple[str, GroupCounts]] = []
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as err:
            raise InputError(f"{path}: invalid JSON ({err})") from None
        if not isinstance(rows, list):
            raise InputError(f"{path}: expected a JSON array of group records")
        for i, row in enumerate(rows):
            if not isinstance(row, dict):
                raise InputError(f"{path}: record {i} is not an object")
            records.append(_parse_record(row, f"{path}: record {i}"))
    else:
        reader = csv.DictReader(io.StringIO(text))
        header = [h.strip() for h in reader.fieldnames or []]
        if header[:6] != ["group", *FIELDS]:
            raise InputError(f"{path}: line 1: header must be group,m0,m1,m2,n0,n1")
        reader.fieldnames = header
        for row in reader:
            records.append(_parse_record(row, f"{path}: line {reader.line_num}"))
    ids = [r[0] for r in records]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise InputError(f"{path}: duplicate group id(s) {', '.join(dup)}")
    return Dataset(g for _, g in records)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> tuple[int, int]:
    parts = text.lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("grid is PIxR, e.g. 200x200")
    return int(parts[0]), int(parts[1])


def _design(args) -> Design:
    m, n = args.m, args.n
    g = args.g if args.g is not None else max(len(m), len(n))
    if len(m) == 1:
        m = m * g
    if len(n) == 1:
        n = n * g
    if len(m) != g or len(n) != g:
        raise InputError(f"--m and --n need 1 or {g} values")
    if g < 2:
        raise InputError("at least 2 groups are required")
    return Design(list(zip(m, n)))


def _exact_config(args) -> ExactConfig:
    try:
        return ExactConfig(
            alpha=args.alpha,
            beta=args.beta,
            grid=args.grid,
            table_cap=args.table_cap,
            nonnegative_rho=not args.full_domain,
        )
    except ValueError as err:
        raise InputError(str(err)) from None


def _methods(args, default) -> list[str]:
    chosen = args.method or list(default)
    # accept the "E+M" spelling as well
    return [m.upper().replace("E+M", "EM") for m in chosen]


# -- commands ---------------------------------------------------------------------------


def cmd_test(args) -> int:
    data = read_dataset(args.input)
    cfg = _exact_config(args)
    methods = _methods(args, METHODS)
    start = time.perf_counter()
    results = run_methods(data, methods, cfg)
    fit = fit_null(data.suffstat())
    refused = [r for r in results if "refused" in r.diagnostics]
    report = {
        "groups": [list(gr.as_tuple()) for gr in data.groups],
        "statistic": results[0].statistic if results else None,
        "pi_hat": fit.pi_hat,
        "R_hat": fit.R_hat,
        "degenerate": fit.degenerate,
        "space_size": space_size(Design.of(data)),
        "seconds": time.perf_counter() - start,
        "config": {"alpha": cfg.alpha, "beta": cfg.beta, "grid": list(cfg.grid), "table_cap": cfg.table_cap,
                   "nonnegative_rho": cfg.nonnegative_rho},
        "results": [
            {"method": r.method, "p_value": None if math.isnan(r.p_value) else r.p_value, **r.diagnostics}
            for r in results
        ],
    }
    if args.json:
        print(json.dumps(report, indent=2))
    elif args.csv:
        print("method,p_value")
        for r in results:
            print(f"{r.method},{'' if math.isnan(r.p_value) else repr(r.p_value)}")
    else:
        print(f"T_SC = {report['statistic']:.4f}   pi_hat = {fit.pi_hat:.4f}   R_hat = {fit.R_hat:.4f}")
        print(f"sample space: {report['space_size']} tables")
        for r in results:
            shown = "refused" if math.isnan(r.p_value) else f"{r.p_value:.4f}"
            print(f"  {r.method:<3} {shown:>8}   ({r.diagnostics['seconds']:.2f} s)")
            if "ci_bounds" in r.diagnostics:
                b = r.diagnostics["ci_bounds"]
                print(f"      CI_pi = [{b['pi_lo']:.4f}, {b['pi_hi']:.4f}]   CI_R = [{b['R_lo']:.4f}, {b['R_hi']:.4f}]")
            if "refused" in r.diagnostics:
                print(f"      {r.diagnostics['refused']}")
    if results and len(refused) == len(results):
        return EXIT_CAPACITY
    return EXIT_OK


def _study_cache(args) -> PValueCache:
    return PValueCache(StudyConfig(exact=_exact_config(args), sup_grid=args.sup_grid, threads=args.threads))


def _emit(rows, args, meta, summary: str | None = None) -> None:
    if args.json:
        print(to_json(rows, **meta))
    else:
        sys.stdout.write(to_csv(rows))
        if summary:
            print(summary, file=sys.stderr)


def cmd_size(args) -> int:
    design = _design(args)
    cache = _study_cache(args)
    all_rows, meta = [], {"design": [list(x) for x in design.margins], "alpha": args.alpha, "summary": {}}
    lines = []
    for method in _methods(args, ["E"]):
        grid = size_grid(design, method, args.pi, args.rho, args.alpha, cache)
        all_rows += grid.rows()
        frac = grid.fractions()
        meta["summary"][method] = frac
        lines.append(f"{method}: " + ", ".join(f"{k} {v:.3f}" for k, v in frac.items()))
    _emit(all_rows, args, meta, "\n".join(lines))
    return EXIT_OK


def cmd_power(args) -> int:
    design = _design(args)
    if len(args.fixed) == 1:
        args.fixed = args.fixed * (design.g - 1)
    cache = _study_cache(args)
    rows = []
    for method in _methods(args, ["E"]):
        rows += power_curve(design, method, args.fixed, args.R, args.pig, args.alpha, cache).rows()
    meta = {"design": [list(x) for x in design.margins], "alpha": args.alpha, "fixed": args.fixed, "R": args.R}
    _emit(rows, args, meta)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", action="append", choices=[*METHODS, "E+M"], help="repeatable; default depends on command")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.001, help="CI method confidence complement")
    p.add_argument("--grid", type=_grid, default=(200, 200), help="supremum search grid, PIxR")
    p.add_argument("--table-cap", type=int, default=5_000_000, help="largest space for EM and CI")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seedless", action="store_true", help="no-op: nothing here draws random numbers")
    p.add_argument("--full-domain", action="store_true", help="search suprema over rho < 0 too")
    out = p.add_mutually_exclusive_group()
    out.add_argument("--json", action="store_true")
    out.add_argument("--csv", action="store_true")


def _design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--g", type=int)
    p.add_argument("--m", type=_int_list, required=True, help="bilateral subjects per group, e.g. 10,10")
    p.add_argument("--n", type=_int_list, required=True, help="unilateral subjects per group")
    p.add_argument("--sup-grid", type=_grid, default=(40, 40), help="per-table supremum grid, PIxRHO")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilateral-exact",
        description="Exact homogeneity tests for combined bilateral and unilateral binary data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="p-values for an observed table")
    p.add_argument("input", help="CSV (group,m0,m1,m2,n0,n1) or JSON array of records")
    _common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("size", help="exact type I error over a (pi, rho) grid")
    _design_flags(p)
    p.add_argument("--pi", type=_float_list, default=[round(0.05 * k, 2) for k in range(1, 20)])
    p.add_argument("--rho", type=_float_list, default=[round(0.05 * k, 2) for k in range(0, 19)])
    _common(p)
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("power", help="exact power as the last group's rate varies")
    _design_flags(p)
    p.add_argument("--fixed", type=_float_list, required=True, help="rates of groups 1..g-1 (one value broadcasts)")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--pig", type=_float_list, default=[round(0.05 * k, 2) for k in range(1, 20)])
    _common(p)
    p.set_defaults(func=cmd_power)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except CapacityError as err:
        print(f"refused: {err}", file=sys.stderr)
        return EXIT_CAPACITY
    except (DomainError, ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
