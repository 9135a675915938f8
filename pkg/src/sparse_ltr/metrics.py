"""Ranking metrics: P@k, AP/MAP, NDCG@k, sparsity ratio, paired t-test.

Rankings are sequences of relevance grades already sorted by descending
model score. A grade >= 1 counts as relevant for the binary metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ._jsonio import csv_cell, dumps

__all__ = [
    "RELEVANT_GRADE",
    "EvalReport",
    "rank_query",
    "precision_at_k",
    "average_precision",
    "mean_average_precision",
    "dcg_at_k",
    "ndcg_at_k",
    "sparsity_ratio",
    "mean_sparsity_ratio",
    "paired_one_sided_t_test",
    "evaluate",
    "write_per_query_csv",
]

RELEVANT_GRADE = 1


def _grades(r) -> np.ndarray:
    return np.asarray(r, dtype=np.int64).reshape(-1)


def rank_query(scores, relevance) -> np.ndarray:
    """Relevance grades ordered by descending score; ties keep input order."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return _grades(relevance)[order]


def precision_at_k(r, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = _grades(r)[:k] >= RELEVANT_GRADE
    return float(np.count_nonzero(rel)) / k


def average_precision(r) -> float:
    """AP over the full list; 0.0 when the query has no relevant document."""
    rel = _grades(r) >= RELEVANT_GRADE
    n_rel = int(np.count_nonzero(rel))
    if n_rel == 0:
        return 0.0
    hits = np.cumsum(rel)
    positions = np.arange(1, rel.shape[0] + 1)
    return float(np.sum((hits / positions)[rel])) / n_rel


def mean_average_precision(rankings: Sequence) -> float:
    if len(rankings) == 0:
        raise ValueError("MAP of an empty query list")
    return float(np.mean([average_precision(r) for r in rankings]))


def dcg_at_k(r, k: int) -> float:
    g = _grades(r)[:k].astype(np.float64)
    discounts = np.log2(np.arange(2, g.shape[0] + 2))
    return float(np.sum((np.exp2(g) - 1.0) / discounts))


def ndcg_at_k(r, k: int) -> float:
    """NDCG@k with gain ``2^r - 1`` and discount ``log2(i + 1)``.

    Returns NaN when the ideal DCG is zero (no relevant document); such
    queries are left out of averages.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    g = _grades(r)
    ideal = dcg_at_k(np.sort(g)[::-1], k)
    if ideal == 0.0:
        return math.nan
    return dcg_at_k(g, k) / ideal


def sparsity_ratio(nonzero: int, active: int) -> float:
    """Fraction of the active (not identically zero) features kept by the model."""
    if active <= 0:
        raise ValueError("no active features")
    if not 0 <= nonzero <= active:
        raise ValueError(f"nonzero={nonzero} outside [0, {active}]")
    return nonzero / active


def mean_sparsity_ratio(ratios: Sequence[float]) -> float:
    if len(ratios) == 0:
        raise ValueError("no folds")
    return float(np.mean(ratios))


def paired_one_sided_t_test(a, b) -> tuple:
    """Paired Student test of ``mean(a - b) < 0`` (``a`` worse than ``b``).

    Returns ``(t, p)`` with ``p`` from the t distribution on ``n - 1``
    degrees of freedom. Zero-variance differences are resolved directly:
    all zero gives ``p = 1``, a negative constant ``p = 0``, a positive
    constant ``p = 1``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-D and of equal length")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two paired observations")
    d = a - b
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    # differences equal up to round-off count as constant
    if sd <= 1e-12 * float(np.max(np.abs(d))) or not np.any(d != d[0]):
        if mean == 0.0:
            return 0.0, 1.0
        return (-math.inf, 0.0) if mean < 0 else (math.inf, 1.0)
    t = mean / (sd / math.sqrt(n))
    return t, float(stats.t.cdf(t, df=n - 1))


@dataclass
class EvalReport:
    qids: list
    per_query_ap: list
    per_query_ndcg_at_k: list
    k: int
    map: float
    mean_ndcg_at_k: float
    nonzero_features: Optional[int] = None
    active_features: Optional[int] = None
    sparsity_ratio: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "k": self.k,
            "map": self.map,
            "mean_ndcg_at_k": self.mean_ndcg_at_k,
            "sparsity_ratio": self.sparsity_ratio,
            "nonzero_features": self.nonzero_features,
            "active_features": self.active_features,
            "queries": len(self.qids),
        }


def evaluate(dataset, scores, k: int = 10, nonzero=None, active=None) -> EvalReport:
    """Per-query AP and NDCG@k for ``scores`` over ``dataset``'s queries."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (dataset.n_samples,):
        raise ValueError("one score per document is required")
    qids, aps, ndcgs = [], [], []
    for qid, start, stop in dataset.queries():
        ranked = rank_query(scores[start:stop], dataset.relevance[start:stop])
        qids.append(qid)
        aps.append(average_precision(ranked))
        ndcgs.append(ndcg_at_k(ranked, k))
    valid = [v for v in ndcgs if not math.isnan(v)]
    sr = None
    if nonzero is not None and active is not None:
        sr = sparsity_ratio(nonzero, active)
    return EvalReport(
        qids=qids,
        per_query_ap=aps,
        per_query_ndcg_at_k=ndcgs,
        k=k,
        map=float(np.mean(aps)) if aps else math.nan,
        mean_ndcg_at_k=float(np.mean(valid)) if valid else math.nan,
        nonzero_features=nonzero,
        active_features=active,
        sparsity_ratio=sr,
    )


PER_QUERY_FIELDS = ("qid", "ap", "ndcg_at_k")


def per_query_rows(report: EvalReport) -> list:
    return [list(row) for row in zip(report.qids, report.per_query_ap, report.per_query_ndcg_at_k)]


def write_per_query_csv(report: EvalReport, path) -> None:
    """CSV with columns ``qid,ap,ndcg_at_k``; NDCG is empty for skipped queries."""
    lines = [",".join(PER_QUERY_FIELDS)]
    for qid, ap, nd in per_query_rows(report):
        lines.append(",".join([csv_cell(qid), csv_cell(ap), "" if math.isnan(nd) else csv_cell(nd)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_json(report: EvalReport, path) -> None:
    Path(path).write_text(dumps(report.summary()) + "\n", encoding="utf-8")
