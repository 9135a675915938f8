"""Command line: ``sparse-ltr {train,eval,cv,compare,synth}``.

Exit codes: 0 success, 2 bad flags, 3 data errors (unreadable or malformed
files, missing folds, dimension mismatch), 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from ._jsonio import dumps
from .data import LetorFormatError, build_preference_pairs, discover_folds, normalize_query_minmax, parse_letor_file
from .experiment import (
    DEFAULT_C_GRID,
    ExperimentConfig,
    compare_methods,
    comparison_csv,
    format_comparison,
    read_per_query_csv,
    run_experiment,
)
from .metrics import evaluate, write_per_query_csv
from .penalties import PenaltySpec
from .solver import SolverConfig, SolverError, fit, load_model, predict_scores, save_model
from .synth import SynthConfig, write_synthetic_corpus

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

THREADS_ENV = "SPARSE_LTR_THREADS"

log = logging.getLogger("sparse_ltr")


class DataError(Exception):
    pass


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _c_grid(s):
    try:
        grid = tuple(float(x) for x in s.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad C grid {s!r}") from None
    if not grid or any(c <= 0 for c in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise argparse.ArgumentTypeError("C grid must be positive and strictly increasing")
    return grid


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _add_penalty_flags(p):
    p.add_argument("--penalty", choices=["l1", "lp", "log", "mcp"], default="l1")
    p.add_argument("--p", type=float, default=0.5, help="exponent of the lp penalty")
    p.add_argument("--eps", type=_positive_float, default=0.1, help="epsilon of the log penalty")
    p.add_argument("--gamma", type=_positive_float, default=2.0, help="gamma of MCP")


def _add_solver_flags(p):
    p.add_argument("--lipschitz", choices=["sum_norms", "spectral"], default="sum_norms")
    p.add_argument("--inner-tol", type=_positive_float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=10_000, help="inner iteration cap")
    p.add_argument("--outer-tol", type=_positive_float, default=1e-5)
    p.add_argument("--outer-max-iter", type=int, default=20)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse-ltr", description="Sparse pairwise SVM for learning to rank.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one model")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--c", required=True, type=_positive_float)
    p.add_argument("--out", type=Path, default=Path("model.json"))
    p.add_argument("--normalize", action="store_true", help="per-query min-max scaling")
    _add_penalty_flags(p)
    _add_solver_flags(p)

    p = sub.add_parser("eval", help="score a data file with a saved model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", type=Path, help="per-query CSV")

    p = sub.add_parser("cv", help="cross-validate over Fold1..FoldN")
    p.add_argument("--dir", required=True, type=Path)
    p.add_argument("--c-grid", type=_c_grid, default=DEFAULT_C_GRID)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=_default_threads())
    _add_penalty_flags(p)
    _add_solver_flags(p)

    p = sub.add_parser("compare", help="compare cv output directories")
    p.add_argument("dirs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, help="comparison CSV")

    p = sub.add_parser("synth", help="write a synthetic LETOR corpus")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--docs-per-query", type=int, default=20)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--informative", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    return parser


def _penalty(args) -> PenaltySpec:
    return PenaltySpec(kind=args.penalty, p=args.p, epsilon=args.eps, gamma=args.gamma)


def _solver(args, c=1.0) -> SolverConfig:
    return SolverConfig(
        c=c,
        inner_tol=args.inner_tol,
        inner_max_iter=args.max_iter,
        outer_tol=args.outer_tol,
        outer_max_iter=args.outer_max_iter,
        lipschitz_mode=args.lipschitz,
    )


def _echo(args):
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    print("config " + json.dumps(resolved, default=str, sort_keys=True), file=sys.stderr, flush=True)


def _load(path, dimension=None, normalize=False):
    ds = parse_letor_file(path, dimension=dimension)
    return normalize_query_minmax(ds) if normalize else ds


def cmd_train(args) -> int:
    data = _load(args.data, normalize=args.normalize)
    pairs = build_preference_pairs(data)
    if pairs.count == 0:
        raise DataError(f"{args.data}: no preference pairs")
    result = fit(pairs, data, _penalty(args), _solver(args, args.c))
    save_model(result, args.out)
    trace = result.objective_trace
    print(f"objective: start {trace[0]:.10g}, final {trace[-1]:.10g} ({len(trace)} recorded values)")
    print(
        f"iterations: inner {result.inner_iterations}, outer {result.outer_iterations}, converged {result.converged}"
    )
    print(f"nonzero features: {result.nonzero_count} of {data.dimension}")
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model = load_model(args.model)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"bad model file: {exc}") from None
    data = _load(args.data, normalize=args.normalize)
    if data.dimension > model.dimension:
        raise DataError(f"data dimension {data.dimension} exceeds model dimension {model.dimension}")
    if data.dimension < model.dimension:
        # files may omit trailing all-zero features
        data = _load(args.data, dimension=model.dimension, normalize=args.normalize)
    report = evaluate(data, predict_scores(model, data), k=args.k)
    print(f"MAP {report.map:.6f}")
    print(f"NDCG@{args.k} {report.mean_ndcg_at_k:.6f}")
    print(f"queries {len(report.qids)}")
    if args.out:
        write_per_query_csv(report, args.out)
    return EXIT_OK


def cmd_cv(args) -> int:
    if args.k < 1:
        raise DataError("--k must be >= 1")
    folds = discover_folds(args.dir)
    config = ExperimentConfig(
        folds=folds,
        c_grid=args.c_grid,
        penalty=_penalty(args),
        ndcg_k=args.k,
        normalize=args.normalize,
        output_dir=args.out,
        seed=args.seed,
        solver=_solver(args),
        threads=max(1, args.threads),
    )
    summary = run_experiment(config)
    for o in summary.per_fold:
        r = o.test_report
        print(f"{o.name}: C={o.chosen_c:g} MAP={r.map:.4f} NDCG@{args.k}={r.mean_ndcg_at_k:.4f} SR={r.sparsity_ratio:.3f}")
    print(
        f"mean: MAP={summary.mean_map:.4f} NDCG@{args.k}={summary.mean_ndcg_at_k:.4f} "
        f"SR={summary.mean_sparsity_ratio:.3f}"
    )
    print(f"outputs written to {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.dirs) < 2:
        raise DataError("compare needs at least two directories")
    methods = {}
    for i, d in enumerate(args.dirs):
        path = d / "per_query.csv"
        if not path.is_file():
            raise DataError(f"missing {path}")
        name = d.name or str(d)
        if name in methods:
            name = f"{name}#{i + 1}"
        methods[name] = read_per_query_csv(path)
    try:
        rows = compare_methods(methods)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    print(format_comparison(rows))
    if args.out:
        args.out.write_text(comparison_csv(rows), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig(
            queries=args.queries,
            docs_per_query=args.docs_per_query,
            dim=args.dim,
            informative=args.informative,
            seed=args.seed,
            folds=args.folds,
            noise=args.noise,
        )
    except ValueError as exc:
        print(f"sparse-ltr synth: {exc}", file=sys.stderr)
        return EXIT_USAGE
    planted = write_synthetic_corpus(cfg, args.out)
    print(f"wrote {cfg.folds} folds to {args.out}; planted support {planted['support']}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "compare": cmd_compare,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    _echo(args)
    try:
        return COMMANDS[args.command](args)
    except (DataError, LetorFormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"sparse-ltr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"sparse-ltr {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        # remaining ValueErrors come from inconsistent inputs, e.g. a bad --p
        print(f"sparse-ltr {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
