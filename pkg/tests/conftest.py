import sys

import numpy as np
import pytest

from topoattn.graphtext import Graph, aggregate_edges, build_token_adjacency, serialize


def random_causal_map(rng: np.random.Generator, n: int, sink_boost: float = 0.0) -> np.ndarray:
    """Row-stochastic lower-triangular map with optional extra sink weight."""
    A = np.tril(rng.random((n, n)) ** 3)
    A[:, 0] += sink_boost * A.sum(axis=1)
    return A / A.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def example_graph():
    return Graph(4, ((0, 1), (2, 3), (0, 3)))


@pytest.fixture
def two_block_adj():
    return build_token_adjacency(serialize(Graph(4, ((0, 1), (2, 3)))))


@pytest.fixture
def small_adj():
    g = aggregate_edges(Graph(6, ((0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 5), (3, 4))))
    return build_token_adjacency(serialize(g), span_start=1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
