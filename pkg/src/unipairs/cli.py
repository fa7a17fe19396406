"""Command-line interface: ``unipairs fit|predict|scan|simulate``."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass

import numpy as np

from .core import Dataset, UniPairsError, standardize
from .glm import get_family, glm_triplet_scan
from .pipelines import (METHODS, fit, model_from_json, model_to_json, predict,
                        predict_response)
from .simulate import DEFAULT_METHODS, STRUCTURES, SimulationSpec, default_grid, run_grid
from .tripletscan import HierarchyMode, eligible_pairs, scan

EXIT_DATA = 2
EXIT_USAGE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


@dataclass
class Table:
    header: list
    values: np.ndarray

    def column(self, name: str) -> int:
        try:
            return self.header.index(name)
        except ValueError:
            raise CliError(f"column {name!r} not found in header", EXIT_USAGE) from None


def read_csv(path: str) -> Table:
    """Numeric CSV with a header row; data errors name the row and column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_DATA) from None
    except UnicodeDecodeError:
        raise CliError(f"{path} is not valid UTF-8", EXIT_DATA) from None
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise CliError(f"{path}: empty file", EXIT_DATA)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise CliError(f"{path}: duplicate column names in header", EXIT_DATA)
    out = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CliError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}",
                           EXIT_DATA)
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise CliError(f"{path}: row {i}, column {header[c]!r}: "
                               f"non-numeric value {cell!r}", EXIT_DATA) from None
            if not math.isfinite(v):
                raise CliError(f"{path}: row {i}, column {header[c]!r}: non-finite value",
                               EXIT_DATA)
            out[i - 2, c] = v
    return Table(header, out)


def _dataset(args, table: Table) -> Dataset:
    fam = get_family(args.family)
    if fam.name == "cox":
        if not args.time_col or not args.status_col:
            raise CliError("--family cox requires --time-col and --status-col", EXIT_USAGE)
        response_cols = [args.time_col, args.status_col]
    else:
        if not args.target:
            raise CliError("--target is required", EXIT_USAGE)
        response_cols = [args.target]
    idx = [table.column(c) for c in response_cols]
    feats = [c for c in range(len(table.header)) if c not in idx]
    if not feats:
        raise CliError("no feature columns left after removing the response", EXIT_USAGE)
    X = table.values[:, feats]
    names = [table.header[c] for c in feats]
    status = table.values[:, idx[1]] if fam.name == "cox" else None
    try:
        return Dataset(X, table.values[:, idx[0]], feature_names=names, status=status)
    except UniPairsError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_fit(args) -> int:
    data = _dataset(args, read_csv(args.input))
    kw = dict(k=args.folds, seed=args.seed, family=args.family, threads=args.threads)
    if args.method == "unipairs-2stage":
        kw["hierarchy"] = args.hierarchy
    model = fit(data, args.method, **kw)
    _write(args.output, model_to_json(model) + "\n")
    s = model.scan_summary
    out = sys.stderr if args.output in (None, "-") else sys.stdout
    print(f"method: {model.method} (family {model.family}, hierarchy {model.hierarchy})",
          file=out)
    print(f"main effects selected: {len(model.active_main)}", file=out)
    print(f"interactions selected: {len(model.active_interactions)}", file=out)
    print(f"pairs scanned: {s.get('n_pairs_scanned', 0)}, screened in: {s.get('n_selected', 0)}",
          file=out)
    print(f"lambda: {model.info.get('lambda'):.6g}, cv error: {model.info.get('cv_error'):.6g}",
          file=out)
    return 0


def cmd_predict(args) -> int:
    if not args.model:
        raise CliError("--model is required", EXIT_USAGE)
    try:
        with open(args.model, encoding="utf-8") as fh:
            model = model_from_json(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read model: {exc}", EXIT_DATA) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"invalid model file: {exc}", EXIT_USAGE) from None
    table = read_csv(args.input)
    names = list(model.feature_names)
    if all(nm in table.header for nm in names):
        X = table.values[:, [table.header.index(nm) for nm in names]]
    elif table.values.shape[1] == model.p:
        X = table.values
    else:
        raise CliError(f"model expects {model.p} features {names}, input has "
                       f"{table.values.shape[1]} columns", EXIT_USAGE)
    eta = predict(model, X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if model.family == "binomial":
        prob = predict_response(model, X)
        w.writerow(["prediction", "probability"])
        w.writerows([repr(float(a)), repr(float(b))] for a, b in zip(eta, prob))
    else:
        w.writerow(["prediction"])
        w.writerows([repr(float(a))] for a in eta)
    _write(args.output, buf.getvalue())
    return 0


def cmd_scan(args) -> int:
    data = _dataset(args, read_csv(args.input))
    fam = get_family(args.family)
    min_n = 5 if fam.name == "gaussian" else 10
    if data.n < min_n:
        raise CliError(f"scan needs at least {min_n} rows, got {data.n}", EXIT_USAGE)
    design = standardize(data)
    pairs = eligible_pairs(design.p, HierarchyMode.NONE, [], features=design.kept)
    if fam.name == "gaussian":
        res = scan(design, data.y, pairs, threads=args.threads)
    else:
        res = glm_triplet_scan(design, fam.response(data), fam, pairs, threads=args.threads)
    order = np.lexsort((res.k, res.j, res.p_value))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "k", "beta", "p_value", "selected"])
    for i in order:
        w.writerow([int(res.j[i]), int(res.k[i]), repr(float(res.beta[i])),
                    repr(float(res.p_value[i])), int(res.selected[i])])
    _write(args.output, buf.getvalue())
    return 0


def cmd_simulate(args) -> int:
    structures = args.structures.split(",") if args.structures else list(STRUCTURES)
    for s in structures:
        if s not in STRUCTURES:
            raise CliError(f"unknown structure {s!r}; choose from {sorted(STRUCTURES)}",
                           EXIT_USAGE)
    grid = default_grid(structures, n_reps=args.reps, seed=args.seed)
    if args.n is not None or args.p is not None:
        np_pairs = sorted({(args.n or g.n, args.p or g.p) for g in grid})
    else:
        np_pairs = sorted({(g.n, g.p) for g in grid}, reverse=True)
    rhos = args.rho if args.rho is not None else sorted({g.rho for g in grid})
    snrs = args.snr if args.snr is not None else sorted({g.snr for g in grid})
    try:
        specs = [SimulationSpec(n, p, rho, s, snr, args.reps, args.seed)
                 for s in structures for n, p in np_pairs for rho in rhos for snr in snrs]
    except ValueError as exc:
        raise CliError(f"invalid grid: {exc}", EXIT_USAGE) from None
    res = run_grid(specs, DEFAULT_METHODS, k=args.folds, threads=args.threads)
    _write(args.output, res.to_csv())
    return 0


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _folds(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"--folds must be at least 2, got {text}")
    return v


def _floats(text):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="unipairs",
                     description="Sparse regression with pairwise interactions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_input=True):
        p.add_argument("--input", required=needs_input, help="CSV file with a header row")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--threads", type=int, default=0, help="worker cap (0 = auto)")
        p.add_argument("--output", default=None, help="output path (default stdout)")
        p.add_argument("--folds", type=_folds, default=10)

    def data_args(p):
        p.add_argument("--target", help="response column")
        p.add_argument("--family", choices=["gaussian", "binomial", "cox"], default="gaussian")
        p.add_argument("--time-col", help="survival time column (cox)")
        p.add_argument("--status-col", help="event indicator column (cox)")

    p_fit = sub.add_parser("fit", help="fit a model and write JSON")
    common(p_fit)
    data_args(p_fit)
    p_fit.add_argument("--method", choices=list(METHODS), default="unipairs-2stage",
                       help="unipairs-2stage is the recommended default")
    p_fit.add_argument("--hierarchy", choices=[m.value for m in HierarchyMode], default="none")
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict from a saved model")
    common(p_pred)
    p_pred.add_argument("--model", help="model JSON written by fit")
    p_pred.set_defaults(func=cmd_predict)

    p_scan = sub.add_parser("scan", help="dump the pairwise screening table")
    common(p_scan)
    data_args(p_scan)
    p_scan.set_defaults(func=cmd_scan)

    p_sim = sub.add_parser("simulate", help="run the simulation grid")
    common(p_sim, needs_input=False)
    p_sim.add_argument("--structures", help="comma-separated structure names")
    p_sim.add_argument("--n", type=_positive_int)
    p_sim.add_argument("--p", type=_positive_int)
    p_sim.add_argument("--rho", type=_floats)
    p_sim.add_argument("--snr", type=_floats)
    p_sim.add_argument("--reps", type=_positive_int, default=20)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        return exc.code
    except UniPairsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
