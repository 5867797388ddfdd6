"""Small annotated graphs (n <= 30) shared by the oracle tests."""

import networkx as nx
import numpy as np

from pisces.adversary import AdversaryScenario, inject_adversary
from pisces.graph import SocialGraph


def _sg(G):
    G = nx.convert_node_labels_to_integers(G)
    return SocialGraph.from_edges(G.number_of_nodes(), list(G.edges()))


def _with(G, malicious, s=0, topology="chain"):
    g = _sg(G)
    sc = AdversaryScenario(g=None, malicious_nodes=len(malicious), sybils_per_edge=s,
                           malicious_topology=topology, seed=3)
    return inject_adversary(g, sc, malicious=malicious)


def small_corpus():
    """List of ``(name, AnnotatedGraph)``."""
    out = [
        ("path5", _with(nx.path_graph(5), [4])),
        ("cycle8", _with(nx.cycle_graph(8), [3, 4])),
        ("star5", _with(nx.star_graph(4), [2])),
        ("k6", _with(nx.complete_graph(6), [0])),
        ("lollipop", _with(nx.lollipop_graph(5, 4), [8])),
        ("ws16", _with(nx.connected_watts_strogatz_graph(16, 4, 0.3, seed=5), [1, 2, 3])),
        ("gnp20", _with(nx.connected_watts_strogatz_graph(20, 4, 0.8, seed=9), [0, 7, 13, 19])),
        ("sybil", _with(nx.cycle_graph(10), [0], s=2)),
    ]
    ba = nx.barabasi_albert_graph(28, 2, seed=4)
    out.append(("ba28", _with(ba, [int(np.argmax([d for _, d in ba.degree()]))])))
    for name, ag in out:
        assert ag.graph.n <= 30, name
    return out
