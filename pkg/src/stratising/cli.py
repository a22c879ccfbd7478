"""Command-line entry point: ``stratising simulate|fit|bench|export``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .estimators import ESTIMATORS, RULES, EstimatorKind, symmetrize
from .ising import EnumerationLimitError
from .model import DataError, StratifiedGraphEstimate
from .selection import GridSpec, SelectionError, select_by_grid
from .simulation import STRUCTURES, SimulationDesign, run_benchmark, simulate, summarize
from .solvers import SolverError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x != ""]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None

    return parse


_AXES = {"lambda1": 0, "l1": 0, "λ1": 0, "lambda2": 1, "l2": 1, "λ2": 1}


def parse_grid(text: str, ratio: float = 0.01, scaled: bool = False) -> GridSpec:
    """``lambda1:10,lambda2:10`` sets point counts; ``lambda1:0.5/0.1`` gives values.

    An integer is a count and anything else a ``/``-separated value list,
    so ``lambda2:0.2`` is a single value. A bare ``10,10`` is read
    positionally.
    """
    counts = [10, 10]
    values = [None, None]
    for pos, item in enumerate(text.split(",")):
        name, sep, spec = item.partition(":")
        if not sep:
            name, spec = ("lambda1", "lambda2")[min(pos, 1)], name
        if name.strip() not in _AXES:
            raise UsageError(f"unknown grid axis {name!r} in {text!r}")
        axis = _AXES[name.strip()]
        try:
            if "/" in spec or not spec.strip().isdigit():
                values[axis] = tuple(float(v) for v in spec.split("/"))
            else:
                counts[axis] = int(spec)
        except ValueError:
            raise UsageError(f"bad grid specification {item!r}") from None
    try:
        return GridSpec(counts[0], counts[1], ratio, values[0], values[1], scaled)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(args) -> GridSpec:
    return parse_grid(args.grid, args.grid_ratio, args.scaled_lambda2)


def _add_grid(p):
    p.add_argument("--grid", default="lambda1:10,lambda2:10",
                   help="lambda1:COUNT,lambda2:COUNT, or explicit values a/b/c per axis")
    p.add_argument("--grid-ratio", type=float, default=0.01,
                   help="smallest grid value as a fraction of lambda_max")
    p.add_argument("--scaled-lambda2", action="store_true",
                   help="scale the deviation penalty by sqrt(n_k / N) per stratum")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stratising", description="Stratified Ising graph estimation")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("simulate", help="draw a synthetic stratified dataset")
    s.add_argument("--structure", choices=STRUCTURES, default="chain")
    s.add_argument("--p", type=int, default=10)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--n", type=int, default=500, help="observations per stratum")
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, type=Path, help="dataset CSV")
    s.add_argument("--truth", required=True, type=Path, help="ground-truth JSON")

    f = sub.add_parser("fit", help="estimate stratified graphs from a dataset")
    f.add_argument("--data", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path, help="estimate JSON")
    f.add_argument("--estimator", choices=ESTIMATORS, default="datashared")
    f.add_argument("--reference", help="reference stratum label (reflasso only)")
    f.add_argument("--rule", choices=RULES, default="min")
    f.add_argument("--min-or", type=float, default=1.0, dest="min_or")
    f.add_argument("--per-node", action="store_true", help="per-node selection (indep only)")
    f.add_argument("--seed", type=int, default=None, help="recorded for provenance")
    f.add_argument("--jobs", type=int, default=1)
    _add_grid(f)

    b = sub.add_parser("bench", help="run the simulation benchmark")
    b.add_argument("--structure", type=_csv_list(str), default=["chain"])
    b.add_argument("--p", type=_csv_list(int), default=[10])
    b.add_argument("--k", type=int, default=3)
    b.add_argument("--n", type=int, default=500)
    b.add_argument("--rho", type=_csv_list(float), default=[0.0])
    b.add_argument("--replicates", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--estimator", type=_csv_list(str), default=["indep", "fused", "datashared"],
                   help="comma list; reflasso takes its reference index as reflasso:0")
    b.add_argument("--rule", choices=RULES, default="min")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--timing", action="store_true", help="fill the seconds column")
    b.add_argument("--out", required=True, type=Path, help="records CSV")
    b.add_argument("--summary", type=Path, help="optional JSON of per-design means")
    _add_grid(b)

    e = sub.add_parser("export", help="write per-stratum graphs from an estimate")
    e.add_argument("--estimate", required=True, type=Path)
    e.add_argument("--format", choices=("structured", "dot"), default="structured")
    e.add_argument("--min-or", type=float, default=1.0, dest="min_or")
    e.add_argument("--out-dir", required=True, type=Path)
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        design = SimulationDesign(args.structure, args.p, args.k, args.n, args.rho, 1, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    truth, _, data = simulate(design)
    io.write_dataset(args.out, data)
    meta = {
        "structure": design.structure,
        "p": design.p,
        "K": design.K,
        "n_k": list(design.sizes),
        "rho": design.rho,
        "seed": design.seed,
    }
    io.write_document(args.truth, io.truth_document(truth, data.stratum_names, data.variable_names, meta))
    return EXIT_OK


def _kind(args, data) -> EstimatorKind:
    if args.estimator == "reflasso":
        if args.reference is None:
            raise UsageError("--reference is required with --estimator reflasso")
        if args.reference not in data.stratum_names:
            raise UsageError(
                f"reference {args.reference!r} is not a stratum; have {list(data.stratum_names)}"
            )
        return EstimatorKind("reflasso", data.stratum_names.index(args.reference))
    if args.reference is not None:
        raise UsageError("--reference only applies to reflasso")
    return EstimatorKind(args.estimator)


def cmd_fit(args) -> int:
    if args.min_or < 0:
        raise UsageError("--min-or must be >= 0")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    grid = _grid(args)
    data = io.read_dataset(args.data)
    kind = _kind(args, data)
    if args.per_node and kind.name != "indep":
        raise UsageError("--per-node is only available for indep")
    res = select_by_grid(data, kind, grid, per_node=args.per_node, jobs=args.jobs)
    est = symmetrize(res.fits, args.rule)
    est = StratifiedGraphEstimate(est.p, io.odds_ratio_filter(est.edge_weights, args.min_or))
    names = data.stratum_names
    nonconverged = [f.node for f in res.fits if not f.converged]
    for j in nonconverged:
        print(f"warning: node {data.variable_names[j]} did not converge", file=sys.stderr)
    lam2 = res.chosen.lambda2
    meta = {
        "estimator": kind.name,
        "reference": None if kind.reference is None else names[kind.reference],
        "rule": args.rule,
        "grid": grid.describe(),
        "per_node": args.per_node,
        "min_odds_ratio": args.min_or,
        "seed": args.seed,
        "source": args.data.name,
        "selection": {
            "lambda1": res.chosen.lambda1,
            "lambda2": list(lam2) if isinstance(lam2, tuple) else lam2,
            "df": res.df,
            "bic": res.bic,
            "per_node_lambda": None if res.per_node is None else [list(c) for c in res.per_node],
        },
        "degenerate": [
            [data.variable_names[f.node], names[k]]
            for f in res.fits
            for k in range(data.K)
            if f.degenerate is not None and f.degenerate[k]
        ],
        "nonconverged": [data.variable_names[j] for j in nonconverged],
    }
    io.write_document(args.out, io.estimate_document(est, names, data.variable_names, meta))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    grid = _grid(args)
    records = []
    for structure in args.structure:
        for p in args.p:
            for rho in args.rho:
                try:
                    design = SimulationDesign(structure, p, args.k, args.n, rho, args.replicates, args.seed)
                    for e in args.estimator:
                        name, _, ref = e.partition(":")
                        EstimatorKind(name, int(ref) if ref else None).validate(args.k)
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
                records += run_benchmark(design, args.estimator, grid=grid, rule=args.rule, jobs=args.jobs)
    io.write_records(args.out, records, timing=args.timing)
    if args.summary:
        summary = [
            {"design": d, "estimator": e, **vals} for (d, e), vals in summarize(records).items()
        ]
        io.write_document(args.summary, {"summary": summary})
    for r in records:
        if r.error:
            print(f"warning: {r.design} replicate {r.replicate} {r.estimator}: {r.error}", file=sys.stderr)
    return EXIT_OK


def cmd_export(args) -> int:
    if args.min_or < 0:
        raise UsageError("--min-or must be >= 0")
    doc = io.read_document(args.estimate)
    io.weights_from_document(doc)  # validates the table
    for path in io.export_graphs(doc, args.out_dir, args.format, args.min_or):
        print(path)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "bench": cmd_bench, "export": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"stratising: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"stratising: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, SelectionError, EnumerationLimitError, ArithmeticError) as exc:
        print(f"stratising: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"stratising: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
