"""Synthetic LETOR corpora with a planted sparse ranking function.

Features are uniform on [0, 1] and rounded to six decimals. Each query's
documents are scored with ``x·w* + noise`` and graded by rank within the
query: the top ``grade_fractions[0]`` get grade 2, the next
``grade_fractions[1]`` grade 1, the rest 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._jsonio import dumps
from .data import Dataset, write_letor_file

__all__ = ["SynthConfig", "make_synthetic_dataset", "write_synthetic_corpus"]


@dataclass(frozen=True)
class SynthConfig:
    queries: int = 100
    docs_per_query: int = 20
    dim: int = 50
    informative: int = 5
    seed: int = 0
    folds: int = 5
    noise: float = 0.0
    grade_fractions: tuple = (0.2, 0.3)

    def __post_init__(self):
        if self.queries < 1 or self.docs_per_query < 2:
            raise ValueError("need at least one query and two documents per query")
        if self.dim < 1 or not 1 <= self.informative <= self.dim:
            raise ValueError("need 1 <= informative <= dim")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")
        if self.queries < max(self.folds, 3):
            raise ValueError("fewer queries than fold parts")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        hi, mid = self.grade_fractions
        if hi < 0 or mid < 0 or hi + mid > 1:
            raise ValueError("bad grade fractions")


def _grades(scores: np.ndarray, fractions) -> np.ndarray:
    n = scores.shape[0]
    order = np.argsort(-scores, kind="stable")
    n2 = int(round(fractions[0] * n))
    n1 = int(round((fractions[0] + fractions[1]) * n))
    g = np.zeros(n, dtype=np.int64)
    g[order[:n1]] = 1
    g[order[:n2]] = 2
    return g


def make_synthetic_dataset(cfg: SynthConfig, rng=None):
    """Return ``(dataset, w_star)`` holding all ``cfg.queries`` queries."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    support = np.sort(rng.choice(cfg.dim, size=cfg.informative, replace=False))
    w_star = np.zeros(cfg.dim)
    w_star[support] = rng.uniform(0.5, 1.5, size=cfg.informative) * rng.choice([-1.0, 1.0], size=cfg.informative)

    n = cfg.queries * cfg.docs_per_query
    X = np.round(rng.uniform(0.0, 1.0, size=(n, cfg.dim)), 6)
    scores = X @ w_star
    if cfg.noise > 0:
        scores = scores + cfg.noise * rng.standard_normal(n)
    rel = np.empty(n, dtype=np.int64)
    qids = []
    for q in range(cfg.queries):
        lo, hi = q * cfg.docs_per_query, (q + 1) * cfg.docs_per_query
        rel[lo:hi] = _grades(scores[lo:hi], cfg.grade_fractions)
        qids.extend([str(q + 1)] * cfg.docs_per_query)
    docids = [f"D{i + 1}" for i in range(n)]
    return Dataset.from_arrays(X, rel, qids, docids), w_star


def _subset(dataset: Dataset, query_numbers) -> Dataset:
    rows = []
    for q in query_numbers:
        lo, hi = dataset.query_index[str(q + 1)]
        rows.extend(range(lo, hi))
    rows = np.asarray(rows, dtype=np.intp)
    return Dataset.from_arrays(
        dataset.features[rows],
        dataset.relevance[rows],
        [dataset.query_ids[i] for i in rows],
        [dataset.doc_ids[i] for i in rows],
    )


def write_synthetic_corpus(cfg: SynthConfig, out_dir) -> dict:
    """Write ``Fold1 ... FoldN/{train,vali,test}.txt`` under ``out_dir``.

    Queries are cut into ``max(folds, 3)`` consecutive parts; fold ``f``
    rotates them so that test and validation each take one part and
    training takes the rest. Also writes ``planted.json`` with ``w*``.
    """
    out_dir = Path(out_dir)
    dataset, w_star = make_synthetic_dataset(cfg)
    n_parts = max(cfg.folds, 3)
    parts = np.array_split(np.arange(cfg.queries), n_parts)
    for f in range(cfg.folds):
        order = [(f + i) % n_parts for i in range(n_parts)]
        train_q = np.concatenate([parts[i] for i in sorted(order[:-2])])
        vali_q, test_q = parts[order[-2]], parts[order[-1]]
        fold_dir = out_dir / f"Fold{f + 1}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        write_letor_file(_subset(dataset, train_q), fold_dir / "train.txt", float_format=".6f")
        write_letor_file(_subset(dataset, vali_q), fold_dir / "vali.txt", float_format=".6f")
        write_letor_file(_subset(dataset, test_q), fold_dir / "test.txt", float_format=".6f")
    planted = {
        "seed": cfg.seed,
        "dim": cfg.dim,
        "support": [int(j) + 1 for j in np.flatnonzero(w_star)],
        "weights": {str(j + 1): float(w_star[j]) for j in np.flatnonzero(w_star)},
    }
    (out_dir / "planted.json").write_text(dumps(planted) + "\n", encoding="utf-8")
    return planted
