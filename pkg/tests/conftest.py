import numpy as np
import pytest

from sparse_ltr.data import Dataset, build_preference_pairs


def random_dataset(rng, n_queries=4, docs=(3, 8), d=6, grades=3, density=1.0):
    feats, rels, qids = [], [], []
    for q in range(n_queries):
        m = int(rng.integers(docs[0], docs[1] + 1))
        x = rng.standard_normal((m, d))
        if density < 1.0:
            x *= rng.random((m, d)) < density
        feats.append(x)
        rels.append(rng.integers(0, grades, size=m))
        qids += [str(q + 1)] * m
    return Dataset.from_arrays(np.vstack(feats), np.concatenate(rels), qids)


def random_problem(rng, d, n_pairs_max, n_queries=None):
    """Dataset plus pairs with at most ``n_pairs_max`` pairs."""
    while True:
        nq = n_queries or int(rng.integers(2, 6))
        ds = random_dataset(rng, n_queries=nq, docs=(2, 7), d=d)
        pairs = build_preference_pairs(ds)
        if 0 < pairs.count <= n_pairs_max:
            return ds, pairs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_dataset():
    # two queries; grades [2, 1, 0] and [1, 0]
    X = np.array(
        [
            [1.0, 0.0, 0.5],
            [0.5, 0.0, 0.5],
            [0.0, 0.0, 1.0],
            [2.0, 0.0, 0.0],
            [1.0, 0.0, 3.0],
        ]
    )
    return Dataset.from_arrays(X, [2, 1, 0, 1, 0], ["7", "7", "7", "9", "9"], ["a", "b", "c", "d", "e"])


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``."""

    def record(n, ok, detail=""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append(f"criterion {n:>2}: {status}  {detail}".rstrip())

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
