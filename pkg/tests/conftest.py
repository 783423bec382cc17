import numpy as np
import pytest

from corrclust.core import SignedGraph


def triangle():
    return SignedGraph(3, [(0, 1, 1.0), (1, 2, 1.0)], [(0, 2, 1.0)])


@pytest.fixture
def g3():
    return triangle()


def two_cliques(k=3):
    """Two positive k-cliques joined by negative edges; clustering them costs 0."""
    n = 2 * k
    pos, neg = [], []
    for u in range(n):
        for v in range(u + 1, n):
            (pos if (u < k) == (v < k) else neg).append((u, v, 1.0))
    return SignedGraph(n, pos, neg)


def random_metric(n, rng, scale=1.0):
    """Shortest-path metric of a random complete weighted graph."""
    from corrclust.core import metric_closure

    w = rng.uniform(0.0, scale, size=(n, n))
    w = np.triu(w, 1)
    return metric_closure(w + w.T)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
