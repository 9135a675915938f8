"""Cross-validation protocol: C grid per fold, validation-MAP selection, test report.

For every fold, one model is trained per C on the training split. The C with
the best validation MAP is kept (ties go to the smallest C) and that same
model is scored on the test split, which is only read after the choice.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ._jsonio import csv_cell, dumps
from .data import Dataset, FoldSpec, build_preference_pairs, normalize_query_minmax, parse_letor_file
from .metrics import EvalReport, evaluate, mean_sparsity_ratio, paired_one_sided_t_test, sparsity_ratio
from .penalties import PenaltySpec
from .solver import FitResult, SolverConfig, SolverError, fista_solve, lipschitz_constant, predict_scores, reweighted_solve, save_model

__all__ = [
    "DEFAULT_C_GRID",
    "ExperimentConfig",
    "FoldOutcome",
    "ExperimentSummary",
    "ComparisonRow",
    "run_fold",
    "run_experiment",
    "write_outputs",
    "per_query_table",
    "read_per_query_csv",
    "compare_methods",
    "format_comparison",
]

log = logging.getLogger(__name__)

DEFAULT_C_GRID = tuple(10.0**i for i in range(-4, 5))
SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    folds: tuple
    c_grid: tuple = DEFAULT_C_GRID
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    ndcg_k: int = 10
    normalize: bool = False
    output_dir: Optional[Path] = None
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "folds", tuple(self.folds))
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        if not self.folds:
            raise ValueError("no folds")
        if not self.c_grid:
            raise ValueError("empty C grid")
        if any(c <= 0 for c in self.c_grid):
            raise ValueError("C values must be positive")
        if any(b <= a for a, b in zip(self.c_grid, self.c_grid[1:])):
            raise ValueError("C grid must be strictly increasing")
        if self.ndcg_k < 1:
            raise ValueError("ndcg_k must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def echo(self) -> dict:
        """Configuration as plain data. Leaves out output_dir and threads, which do not affect results."""
        return {
            "folds": [
                {"name": f.name, "train": str(f.train_path), "validation": str(f.validation_path), "test": str(f.test_path)}
                for f in self.folds
            ],
            "c_grid": list(self.c_grid),
            "penalty": self.penalty.params(),
            "ndcg_k": self.ndcg_k,
            "normalize": self.normalize,
            "seed": self.seed,
            "solver": {
                "inner_tol": self.solver.inner_tol,
                "inner_max_iter": self.solver.inner_max_iter,
                "inner_patience": self.solver.inner_patience,
                "outer_tol": self.solver.outer_tol,
                "outer_max_iter": self.solver.outer_max_iter,
                "lipschitz_mode": self.solver.lipschitz_mode,
                "zero_threshold": self.solver.zero_threshold,
            },
        }


@dataclass
class FoldOutcome:
    name: str
    chosen_c: float
    validation_map: float
    test_report: EvalReport
    fit: FitResult
    validation_maps: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def row(self) -> dict:
        r = self.test_report
        return {
            "fold": self.name,
            "chosen_c": self.chosen_c,
            "validation_map": self.validation_map,
            "test_map": r.map,
            "test_ndcg_at_k": r.mean_ndcg_at_k,
            "sparsity_ratio": r.sparsity_ratio,
            "nonzero_features": r.nonzero_features,
            "active_features": r.active_features,
            "inner_iterations": self.fit.inner_iterations,
            "outer_iterations": self.fit.outer_iterations,
            "converged": self.fit.converged,
        }


@dataclass
class ExperimentSummary:
    per_fold: list
    mean_map: float
    mean_ndcg_at_k: float
    mean_sparsity_ratio: float
    k: int = 10


def _load_split(loader, path, dimension, normalize) -> Dataset:
    ds = loader(path) if dimension is None else loader(path, dimension=dimension)
    return normalize_query_minmax(ds) if normalize else ds


def _train_one(pairs, train, spec, solver_cfg, c, L) -> FitResult:
    cfg = SolverConfig(
        c=c,
        inner_tol=solver_cfg.inner_tol,
        inner_max_iter=solver_cfg.inner_max_iter,
        inner_patience=solver_cfg.inner_patience,
        outer_tol=solver_cfg.outer_tol,
        outer_max_iter=solver_cfg.outer_max_iter,
        lipschitz_mode=solver_cfg.lipschitz_mode,
        zero_threshold=solver_cfg.zero_threshold,
    )
    if spec.is_convex:
        return fista_solve(pairs, train, spec, cfg, lipschitz=L)
    return reweighted_solve(pairs, train, spec, cfg, lipschitz=L)


def run_fold(
    fold: FoldSpec,
    config: ExperimentConfig,
    loader: Callable = parse_letor_file,
) -> FoldOutcome:
    """Train over the C grid, select on validation MAP, report on test."""
    train = _load_split(loader, fold.train_path, None, config.normalize)
    vali = _load_split(loader, fold.validation_path, train.dimension, config.normalize)
    pairs = build_preference_pairs(train)
    if pairs.count == 0:
        raise ValueError(f"{fold.train_path}: training split has no preference pairs")
    L = lipschitz_constant(pairs, train, config.solver.lipschitz_mode)

    def task(c):
        try:
            model = _train_one(pairs, train, config.penalty, config.solver, c, L)
        except (SolverError, FloatingPointError) as exc:
            log.warning("fold %s, C=%g failed: %s", fold.name, c, exc)
            return c, None, str(exc)
        vmap = evaluate(vali, predict_scores(model, vali), k=config.ndcg_k).map
        return c, model, vmap

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(task, config.c_grid))
    else:
        results = [task(c) for c in config.c_grid]

    validation_maps, failures, models = {}, {}, {}
    for c, model, val in results:
        if model is None:
            failures[c] = val
        else:
            models[c] = model
            validation_maps[c] = val
    if not models:
        raise SolverError(f"fold {fold.name}: every grid point failed")

    best_c = None
    for c in config.c_grid:
        if c in validation_maps and (best_c is None or validation_maps[c] > validation_maps[best_c]):
            best_c = c
    model = models[best_c]

    # the test split is read only once the choice of C is fixed
    test = _load_split(loader, fold.test_path, train.dimension, config.normalize)
    active = train.active_features
    nonzero = int(np.count_nonzero((np.abs(model.weights) > config.solver.zero_threshold) & active))
    report = evaluate(test, predict_scores(model, test), k=config.ndcg_k, nonzero=nonzero, active=int(active.sum()))
    return FoldOutcome(
        name=fold.name,
        chosen_c=best_c,
        validation_map=validation_maps[best_c],
        test_report=report,
        fit=model,
        validation_maps=validation_maps,
        failures=failures,
    )


def summarize(outcomes: Sequence[FoldOutcome], k: int) -> ExperimentSummary:
    ndcgs = [o.test_report.mean_ndcg_at_k for o in outcomes]
    return ExperimentSummary(
        per_fold=list(outcomes),
        mean_map=float(np.mean([o.test_report.map for o in outcomes])),
        mean_ndcg_at_k=float(np.mean(ndcgs)),
        mean_sparsity_ratio=mean_sparsity_ratio([o.test_report.sparsity_ratio for o in outcomes]),
        k=k,
    )


def run_experiment(config: ExperimentConfig, loader: Callable = parse_letor_file) -> ExperimentSummary:
    outcomes = []
    for i, fold in enumerate(config.folds, start=1):
        if not fold.name:
            fold = FoldSpec(fold.train_path, fold.validation_path, fold.test_path, name=f"Fold{i}")
        outcome = run_fold(fold, config, loader=loader)
        log.info(
            "%s: C=%g validation MAP %.4f, test MAP %.4f, SR %.3f",
            outcome.name,
            outcome.chosen_c,
            outcome.validation_map,
            outcome.test_report.map,
            outcome.test_report.sparsity_ratio,
        )
        outcomes.append(outcome)
    summary = summarize(outcomes, config.ndcg_k)
    if config.output_dir is not None:
        write_outputs(summary, config, config.output_dir)
    return summary


# --------------------------------------------------------------------------
# output files
# --------------------------------------------------------------------------

PER_FOLD_FIELDS = (
    "fold",
    "chosen_c",
    "validation_map",
    "test_map",
    "test_ndcg_at_k",
    "sparsity_ratio",
    "nonzero_features",
    "active_features",
    "inner_iterations",
    "outer_iterations",
    "converged",
)
PER_QUERY_FIELDS = ("fold", "qid", "ap", "ndcg_at_k")


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if isinstance(v, float) and math.isnan(v) else csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_outputs(summary: ExperimentSummary, config: ExperimentConfig, out_dir) -> None:
    """Write ``summary.json``, ``per_fold.csv``, ``per_query.csv`` and ``model_fold<N>.json``.

    Column order is the ``PER_FOLD_FIELDS`` / ``PER_QUERY_FIELDS`` tuples.
    Floats carry 17 significant digits.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": config.echo(),
        "k": summary.k,
        "mean_map": summary.mean_map,
        "mean_ndcg_at_k": summary.mean_ndcg_at_k,
        "mean_sparsity_ratio": summary.mean_sparsity_ratio,
        "folds": [
            dict(
                o.row(),
                validation_maps={format(c, ".17g"): v for c, v in o.validation_maps.items()},
                failures={format(c, ".17g"): msg for c, msg in o.failures.items()},
            )
            for o in summary.per_fold
        ],
    }
    (out / "summary.json").write_text(dumps(doc) + "\n", encoding="utf-8")
    fold_rows = [[o.row()[f] for f in PER_FOLD_FIELDS] for o in summary.per_fold]
    (out / "per_fold.csv").write_text(_csv_text(PER_FOLD_FIELDS, fold_rows), encoding="utf-8")
    query_rows = []
    for o in summary.per_fold:
        r = o.test_report
        for qid, ap, nd in zip(r.qids, r.per_query_ap, r.per_query_ndcg_at_k):
            query_rows.append([o.name, qid, ap, nd])
    (out / "per_query.csv").write_text(_csv_text(PER_QUERY_FIELDS, query_rows), encoding="utf-8")
    for i, o in enumerate(summary.per_fold, start=1):
        save_model(o.fit, out / f"model_fold{i}.json")


# --------------------------------------------------------------------------
# method comparison
# --------------------------------------------------------------------------

METRICS = ("map", "ndcg")


def per_query_table(summary: ExperimentSummary) -> dict:
    """``{(fold, qid): {"map": AP, "ndcg": NDCG@k}}`` pooled over the test folds."""
    table = {}
    for o in summary.per_fold:
        r = o.test_report
        for qid, ap, nd in zip(r.qids, r.per_query_ap, r.per_query_ndcg_at_k):
            table[(o.name, qid)] = {"map": ap, "ndcg": nd}
    return table


def read_per_query_csv(path) -> dict:
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            nd = row["ndcg_at_k"]
            table[(row["fold"], row["qid"])] = {
                "map": float(row["ap"]),
                "ndcg": float(nd) if nd else math.nan,
            }
    return table


@dataclass
class ComparisonRow:
    metric: str
    method: str
    mean: float
    best: bool
    equivalent: bool
    decrease_pct: Optional[float]
    t_statistic: Optional[float]
    p_value: Optional[float]


def compare_methods(methods: Mapping, metrics: Sequence[str] = METRICS, alpha: float = SIGNIFICANCE) -> list:
    """Compare every method to the best one per metric.

    ``methods`` maps a name to an ExperimentSummary or to a per-query table
    as returned by :func:`per_query_table`. The best method has the highest
    mean over the shared queries (first listed wins ties). Each other method
    is tested with the paired one-sided t-test (other worse than best); at
    ``p >= alpha`` it is reported as equivalent, otherwise with its
    percentage decrease ``100 (best - other) / best``.
    """
    if len(methods) < 2:
        raise ValueError("need at least two methods")
    tables = {
        name: per_query_table(m) if isinstance(m, ExperimentSummary) else dict(m) for name, m in methods.items()
    }
    names = list(tables)
    keys = sorted(tables[names[0]])
    for name in names[1:]:
        if set(tables[name]) != set(keys):
            raise ValueError(f"method {name!r} was evaluated on a different query set")

    rows = []
    for metric in metrics:
        usable = [k for k in keys if all(not math.isnan(tables[n][k][metric]) for n in names)]
        if len(usable) < 2:
            raise ValueError(f"fewer than two queries with a defined {metric}")
        values = {n: np.array([tables[n][k][metric] for k in usable]) for n in names}
        means = {n: float(np.mean(v)) for n, v in values.items()}
        best = max(names, key=lambda n: (means[n], -names.index(n)))
        for n in names:
            if n == best:
                rows.append(ComparisonRow(metric, n, means[n], True, True, None, None, None))
                continue
            t, p = paired_one_sided_t_test(values[n], values[best])
            equivalent = p >= alpha
            dec = None if equivalent else 100.0 * (means[best] - means[n]) / means[best]
            rows.append(ComparisonRow(metric, n, means[n], False, equivalent, dec, t, p))
    return rows


def format_comparison(rows: Sequence[ComparisonRow]) -> str:
    """Plain-text table: best mean, ``~`` for equivalence, else ``-x.x% (p=...)``."""
    lines = []
    for r in rows:
        if r.best:
            cell = f"{r.mean:.4f} (best)"
        elif r.equivalent:
            cell = f"~ (p={r.p_value:.3g})"
        else:
            cell = f"-{r.decrease_pct:.1f}% (p={r.p_value:.3g})"
        lines.append(f"{r.metric}\t{r.method}\t{cell}")
    return "\n".join(lines)


COMPARISON_FIELDS = ("metric", "method", "mean", "best", "equivalent", "decrease_pct", "t_statistic", "p_value")


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    return _csv_text(COMPARISON_FIELDS, [[getattr(r, f) for f in COMPARISON_FIELDS] for r in rows])
