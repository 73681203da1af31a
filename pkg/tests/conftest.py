import numpy as np
import pytest

from ptdgnn.graph import TemporalGraph, generate_synthetic, init_features
from ptdgnn.sampler import SampledSubgraph


def make_graph(edges, n=None, attrs=None, directed=False):
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    n = int(e[:, :2].max()) + 1 if n is None else n
    return TemporalGraph(n, e[:, 0], e[:, 1], e[:, 2], attrs, directed)


def make_subgraph(edges, n=None, t=None, attrs=None):
    """Local subgraph from (u, v) pairs; times default to evenly spaced in [0, 1]."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = int(e.max()) + 1 if n is None else n
    t = np.linspace(0.0, 1.0, len(e)) if t is None else np.asarray(t, dtype=np.float64)
    return SampledSubgraph(np.arange(n), e[:, 0], e[:, 1], t, np.arange(len(e)), attrs)


@pytest.fixture(scope="session")
def synth_graph():
    g = generate_synthetic(300, 2, seed=3)
    return g.with_attrs(init_features(g, "seeded-gaussian", 8, 3))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
