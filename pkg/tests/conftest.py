import networkx as nx
import pytest
from hypothesis import HealthCheck, settings

from pisces.graph import SocialGraph

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_connected(n, p, seed):
    """Connected G(n, p) draw: a random spanning tree plus extra edges."""
    G = nx.gnp_random_graph(n, p, seed=seed)
    T = nx.random_labeled_tree(n, seed=seed) if hasattr(nx, "random_labeled_tree") else nx.random_tree(n, seed=seed)
    G.add_edges_from(T.edges())
    return SocialGraph.from_edges(n, list(G.edges()))


@pytest.fixture
def triangle():
    return SocialGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
