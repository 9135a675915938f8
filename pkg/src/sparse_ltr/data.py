"""LETOR-format datasets, preference pairs and the pair-difference operator.

Documents are stored as a dense ``(n, d)`` feature matrix grouped by query.
Preference pairs are kept as ``(winner, loser)`` index arrays; the rows of the
pair-difference matrix ``x[winner] - x[loser]`` are only formed on demand.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "LetorFormatError",
    "Sample",
    "Dataset",
    "PreferencePairs",
    "FoldSpec",
    "parse_letor_file",
    "parse_letor_lines",
    "write_letor_file",
    "format_letor_lines",
    "build_preference_pairs",
    "pair_difference",
    "materialize_xtilde",
    "pair_incidence",
    "xtilde_apply",
    "xtilde_apply_transpose",
    "normalize_query_minmax",
    "discover_folds",
]

_DOCID_RE = re.compile(r"docid\s*=\s*(\S+)")
_FOLD_RE = re.compile(r"^Fold(\d+)$")

DEFAULT_DENSE_BUDGET = 50_000_000


class LetorFormatError(ValueError):
    """Raised for malformed LETOR input; carries the offending line number."""

    def __init__(self, message: str, lineno: Optional[int] = None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass(frozen=True)
class Sample:
    relevance: int
    query_id: str
    features: np.ndarray
    doc_id: Optional[str] = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Query-grouped documents.

    Attributes
    ----------
    features : ndarray, shape (n, d)
    relevance : ndarray of int, shape (n,)
    query_ids : tuple of str, one per document
    doc_ids : tuple of (str or None)
    query_index : dict mapping query id to a ``(start, stop)`` row range.
        Ranges are contiguous and partition the rows, in file order.
    active_features : bool ndarray, shape (d,). False iff the feature is zero
        in every document.
    """

    features: np.ndarray
    relevance: np.ndarray
    query_ids: tuple
    doc_ids: tuple
    query_index: dict = field(repr=False)
    active_features: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, features, relevance, query_ids, doc_ids=None) -> "Dataset":
        features = np.array(features, dtype=np.float64, copy=True)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n = features.shape[0]
        relevance = np.array(relevance, dtype=np.int64, copy=True).reshape(-1)
        if relevance.shape[0] != n:
            raise ValueError("relevance length does not match number of samples")
        if np.any(relevance < 0):
            raise ValueError("relevance grades must be non-negative")
        query_ids = tuple(str(q) for q in query_ids)
        if len(query_ids) != n:
            raise ValueError("query_ids length does not match number of samples")
        if doc_ids is None:
            doc_ids = (None,) * n
        doc_ids = tuple(doc_ids)
        if len(doc_ids) != n:
            raise ValueError("doc_ids length does not match number of samples")

        query_index: dict = {}
        start = 0
        for i in range(1, n + 1):
            if i == n or query_ids[i] != query_ids[start]:
                qid = query_ids[start]
                if qid in query_index:
                    raise ValueError(f"query {qid!r} is not contiguous")
                query_index[qid] = (start, i)
                start = i
        active = np.any(features != 0.0, axis=0) if n else np.zeros(features.shape[1], bool)
        return cls(
            features=_readonly(features),
            relevance=_readonly(relevance),
            query_ids=query_ids,
            doc_ids=doc_ids,
            query_index=query_index,
            active_features=_readonly(np.asarray(active, dtype=bool)),
        )

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def n_queries(self) -> int:
        return len(self.query_index)

    @property
    def samples(self) -> list:
        return [self.sample(i) for i in range(self.n_samples)]

    def sample(self, i: int) -> Sample:
        return Sample(
            relevance=int(self.relevance[i]),
            query_id=self.query_ids[i],
            features=self.features[i],
            doc_id=self.doc_ids[i],
        )

    def queries(self):
        """Yield ``(query_id, start, stop)`` in file order."""
        for qid, (start, stop) in self.query_index.items():
            yield qid, start, stop

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset.from_arrays(features, self.relevance, self.query_ids, self.doc_ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.relevance, other.relevance)
            and self.query_ids == other.query_ids
            and self.doc_ids == other.doc_ids
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PreferencePairs:
    """Ordered ``(winner, loser)`` row indices; winner has the higher grade."""

    winners: np.ndarray
    losers: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def count(self) -> int:
        return int(self.winners.shape[0])

    @property
    def pairs(self) -> list:
        return list(zip(self.winners.tolist(), self.losers.tolist()))

    def __len__(self):
        return self.count


@dataclass(frozen=True)
class FoldSpec:
    train_path: Path
    validation_path: Path
    test_path: Path
    name: str = ""

    def __post_init__(self):
        paths = [Path(self.train_path), Path(self.validation_path), Path(self.test_path)]
        if len({str(p) for p in paths}) != 3:
            raise ValueError("train, validation and test paths must be distinct")
        object.__setattr__(self, "train_path", paths[0])
        object.__setattr__(self, "validation_path", paths[1])
        object.__setattr__(self, "test_path", paths[2])

    def check_readable(self):
        for p in (self.train_path, self.validation_path, self.test_path):
            if not os.access(p, os.R_OK) or not p.is_file():
                raise FileNotFoundError(f"fold file not readable: {p}")


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _parse_line(line: str, lineno: int, path):
    body, hash_, comment = line.partition("#")
    toks = body.split()
    if not toks:
        raise LetorFormatError("missing relevance label", lineno, path)
    try:
        rel = int(toks[0])
    except ValueError:
        raise LetorFormatError(f"bad relevance label {toks[0]!r}", lineno, path) from None
    if rel < 0:
        raise LetorFormatError(f"negative relevance label {rel}", lineno, path)
    if len(toks) < 2 or not toks[1].startswith("qid:"):
        raise LetorFormatError("expected 'qid:<id>' after the label", lineno, path)
    qid = toks[1][4:]
    if not qid.isdigit():
        raise LetorFormatError(f"bad query id {qid!r}", lineno, path)
    qid = str(int(qid))
    if len(toks) < 3:
        raise LetorFormatError("empty feature list", lineno, path)

    fids = []
    vals = []
    last = 0
    for tok in toks[2:]:
        fid_s, sep, val_s = tok.partition(":")
        if not sep:
            raise LetorFormatError(f"bad feature token {tok!r}", lineno, path)
        try:
            fid = int(fid_s)
            val = float(val_s)
        except ValueError:
            raise LetorFormatError(f"bad feature token {tok!r}", lineno, path) from None
        if fid <= last:
            raise LetorFormatError(
                f"feature ids must be strictly increasing positive integers (got {fid} after {last})",
                lineno,
                path,
            )
        last = fid
        fids.append(fid)
        vals.append(val)

    doc_id = None
    if hash_:
        m = _DOCID_RE.search(comment)
        if m:
            doc_id = m.group(1)
    return rel, qid, fids, vals, doc_id


def parse_letor_lines(lines: Iterable[str], dimension: Optional[int] = None, path=None) -> Dataset:
    """Parse LETOR lines. See :func:`parse_letor_file`."""
    rels, qids, docids, rows = [], [], [], []
    max_fid = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rel, qid, fids, vals, doc_id = _parse_line(line, lineno, path)
        if dimension is not None and fids[-1] > dimension:
            raise LetorFormatError(
                f"feature id {fids[-1]} exceeds declared dimension {dimension}", lineno, path
            )
        max_fid = max(max_fid, fids[-1])
        rels.append(rel)
        qids.append(qid)
        docids.append(doc_id)
        rows.append((fids, vals))

    d = max_fid if dimension is None else int(dimension)
    X = np.zeros((len(rows), d), dtype=np.float64)
    for i, (fids, vals) in enumerate(rows):
        X[i, np.asarray(fids, dtype=np.intp) - 1] = vals
    try:
        return Dataset.from_arrays(X, rels, qids, docids)
    except ValueError as exc:
        raise LetorFormatError(str(exc), None, path) from None


def parse_letor_file(path, dimension: Optional[int] = None) -> Dataset:
    """Read a LETOR / SVMlight ranking file.

    Lines look like ``<rel> qid:<q> <fid>:<val> ... [#<comment>]``. Missing
    feature ids are filled with 0.0 and the dimension is the largest feature
    id seen, unless ``dimension`` is given, in which case rows are padded to
    it and a larger feature id is an error.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_letor_lines(fh, dimension=dimension, path=path)


def format_letor_lines(dataset: Dataset, float_format: str = "repr") -> list:
    fmt = repr if float_format == "repr" else (lambda v: format(v, float_format))
    out = []
    for i in range(dataset.n_samples):
        feats = " ".join(f"{j + 1}:{fmt(float(v))}" for j, v in enumerate(dataset.features[i]))
        line = f"{int(dataset.relevance[i])} qid:{dataset.query_ids[i]} {feats}"
        if dataset.doc_ids[i] is not None:
            line += f" #docid={dataset.doc_ids[i]}"
        out.append(line)
    return out


def write_letor_file(dataset: Dataset, path, float_format: str = "repr") -> None:
    """Write every feature explicitly so that reparsing gives the same dataset."""
    if dataset.dimension == 0 and dataset.n_samples:
        raise ValueError("cannot write samples with an empty feature list")
    lines = format_letor_lines(dataset, float_format)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# --------------------------------------------------------------------------
# preference pairs and the difference operator
# --------------------------------------------------------------------------


def build_preference_pairs(dataset: Dataset) -> PreferencePairs:
    winners, losers = [], []
    rel = dataset.relevance
    for _, start, stop in dataset.queries():
        r = rel[start:stop]
        s, t = np.nonzero(r[:, None] > r[None, :])
        winners.append(s + start)
        losers.append(t + start)
    if winners:
        w = np.concatenate(winners).astype(np.intp)
        l = np.concatenate(losers).astype(np.intp)
    else:
        w = np.zeros(0, dtype=np.intp)
        l = np.zeros(0, dtype=np.intp)
    return PreferencePairs(winners=_readonly(w), losers=_readonly(l))


def pair_difference(pairs: PreferencePairs, dataset: Dataset, p: int) -> np.ndarray:
    if not 0 <= p < pairs.count:
        raise IndexError(f"pair index {p} out of range for {pairs.count} pairs")
    X = dataset.features
    return X[pairs.winners[p]] - X[pairs.losers[p]]


def materialize_xtilde(
    pairs: PreferencePairs, dataset: Dataset, budget: int = DEFAULT_DENSE_BUDGET
) -> np.ndarray:
    """Dense ``(P, d)`` pair-difference matrix; refuses if ``P * d > budget``."""
    size = pairs.count * dataset.dimension
    if size > budget:
        raise MemoryError(f"dense pair matrix has {size} entries, budget is {budget}")
    X = dataset.features
    return X[pairs.winners] - X[pairs.losers]


def pair_incidence(pairs: PreferencePairs, n_samples: int) -> sparse.csr_matrix:
    """Sparse ``(P, n)`` matrix with +1 at each winner and -1 at each loser.

    ``X̃ = A X``, so products with ``X̃`` cost two sparse and one dense
    matvec. Cached per pair set.
    """
    key = ("incidence", n_samples)
    A = pairs._cache.get(key)
    if A is None:
        P = pairs.count
        rows = np.repeat(np.arange(P, dtype=np.intp), 2)
        cols = np.empty(2 * P, dtype=np.intp)
        cols[0::2] = pairs.winners
        cols[1::2] = pairs.losers
        vals = np.tile([1.0, -1.0], P)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(P, n_samples))
        pairs._cache[key] = A
    return A


def xtilde_apply(pairs: PreferencePairs, dataset: Dataset, w) -> np.ndarray:
    """``X̃ w`` without forming ``X̃``: per-document scores, then differences."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dataset.dimension,):
        raise ValueError(f"w has shape {w.shape}, expected ({dataset.dimension},)")
    s = dataset.features @ w
    return s[pairs.winners] - s[pairs.losers]


def xtilde_apply_transpose(pairs: PreferencePairs, dataset: Dataset, v) -> np.ndarray:
    """``X̃ᵀ v``: scatter pair weights onto documents, then ``Xᵀ u``.

    Per-document accumulation uses ``np.bincount``, which sums in pair order,
    so results are reproducible bit for bit.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (pairs.count,):
        raise ValueError(f"v has shape {v.shape}, expected ({pairs.count},)")
    n = dataset.n_samples
    u = np.bincount(pairs.winners, weights=v, minlength=n) - np.bincount(
        pairs.losers, weights=v, minlength=n
    )
    return dataset.features.T @ u


# --------------------------------------------------------------------------
# preprocessing and fold discovery
# --------------------------------------------------------------------------


def normalize_query_minmax(dataset: Dataset) -> Dataset:
    """Rescale each feature to [0, 1] within each query; constants map to 0."""
    X = np.array(dataset.features, copy=True)
    for _, start, stop in dataset.queries():
        block = X[start:stop]
        lo = block.min(axis=0)
        span = block.max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        X[start:stop] = np.where(span > 0, (block - lo) / safe, 0.0)
    return dataset.with_features(X)


def discover_folds(directory, names: Sequence[str] = ("train.txt", "vali.txt", "test.txt")) -> list:
    """Find ``Fold1 ... FoldN`` subdirectories, LETOR-style, in numeric order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    found = []
    for child in directory.iterdir():
        m = _FOLD_RE.match(child.name)
        if m and child.is_dir():
            found.append((int(m.group(1)), child))
    if not found:
        raise FileNotFoundError(f"no Fold<N> directories under {directory}")
    found.sort()
    numbers = [n for n, _ in found]
    if numbers != list(range(1, len(numbers) + 1)):
        raise FileNotFoundError(f"fold numbering has gaps under {directory}: {numbers}")
    folds = []
    for _, child in found:
        spec = FoldSpec(child / names[0], child / names[1], child / names[2], name=child.name)
        spec.check_readable()
        folds.append(spec)
    return folds
