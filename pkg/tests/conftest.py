import numpy as np
import pytest
import scipy.sparse as sp

from phasegraph.graph import WeightedGraph
from phasegraph.hypergraph import Hypergraph


def random_connected_graph(n, rng, density=0.3):
    """Random weighted graph with a spanning path so that it is connected."""
    A = np.triu(rng.random((n, n)) < density, 1) * rng.uniform(0.1, 2.0, (n, n))
    perm = rng.permutation(n)
    for a, b in zip(perm[:-1], perm[1:]):
        i, j = min(a, b), max(a, b)
        A[i, j] = rng.uniform(0.1, 2.0)
    W = A + A.T
    return WeightedGraph(sp.csr_array(W)), W


def random_hypergraph(n, rng, n_edges=None, max_size=6):
    n_edges = n_edges or max(2, n // 2)
    H = np.zeros((n, n_edges))
    for e in range(n_edges):
        size = rng.integers(1, min(max_size, n) + 1)
        H[rng.choice(n, size, replace=False), e] = 1
    # Every vertex in some edge; a chain of pairs keeps the hypergraph connected.
    chain = np.zeros((n, n - 1))
    perm = rng.permutation(n)
    for k in range(n - 1):
        chain[perm[k], k] = chain[perm[k + 1], k] = 1
    H = np.c_[H, chain]
    w = rng.uniform(0.5, 2.0, H.shape[1])
    return Hypergraph(sp.csc_array(H), w), H, w


def dense_normalized_laplacian(W):
    d = W.sum(axis=1)
    s = 1 / np.sqrt(d)
    return np.eye(len(d)) - s[:, None] * W * s[None, :]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
