import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pisces._config import SYBIL
from pisces.adversary import (
    AdversaryScenario,
    ScenarioError,
    add_malicious_clique,
    apply_node_degree_attack,
    apply_route_capture,
    inject_adversary,
    label_counts,
    load_scenario,
    sacrifice_order,
    scenario_from_mapping,
    write_scenario_manifest,
)
from pisces.graph import SocialGraph, TransitionModel, is_connected, stationary_distribution
from pisces.walks import WalkView, sample_walks

# H1=0, H2=1, M1=2, M2=3 on the cycle H1-H2-M1-M2-H1
CYCLE = SocialGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


def _cycle_ag(**kw):
    return inject_adversary(CYCLE, AdversaryScenario(g=2, **kw), malicious=[2, 3])


def _honest_edges(g):
    e = g.edges()
    hh = g.honest[e[:, 0]] & g.honest[e[:, 1]]
    return {tuple(x) for x in e[hh]}


def test_four_cycle_attack_edges():
    ag = _cycle_ag()
    assert {tuple(e) for e in ag.attack_edges} == {(1, 2), (0, 3)}
    assert ag.g == 2 and ag.h == 2 and ag.m == 2


def test_four_cycle_local_capture_blocks_one_entry():
    ag = _cycle_ag(blacklist_policy="local")
    order = sacrifice_order(ag)
    first = tuple(ag.attack_edges[order[0]])
    cap = apply_route_capture(ag, AdversaryScenario(g=2, capture_fraction=0.5, blacklist_policy="local"))
    assert not cap.graph.has_edge(*first)
    assert cap.g == 2 and len(cap.live_attack_edges) == 1
    left = tuple(cap.live_attack_edges[0])
    hops, _ = sample_walks(WalkView.from_graph(cap.graph), np.zeros(20000, np.int64), 6,
                           np.random.default_rng(0))
    steps = np.stack([hops[:, :-1].ravel(), hops[:, 1:].ravel()], axis=1)
    into_m = steps[~cap.graph.compromised[steps[:, 0]] & cap.graph.compromised[steps[:, 1]]]
    assert {tuple(x) for x in into_m} == {left}


def test_capture_fraction_zero_is_identity():
    ag = _cycle_ag()
    assert apply_route_capture(ag) is ag
    assert apply_node_degree_attack(ag, 0) is ag


def test_sybil_chains():
    g = SocialGraph.from_edges(20, list(nx.cycle_graph(20).edges()))
    ag = inject_adversary(g, AdversaryScenario(g=2, sybils_per_edge=10, seed=2, placement="grow"))
    counts = label_counts(ag.graph)
    assert counts["sybil"] == 20
    syb = np.flatnonzero(ag.graph.labels == SYBIL)
    degs = ag.graph.degrees[syb]
    # each chain: one end attached to its anchor (degree 2), far end degree 1
    assert list(np.bincount(degs, minlength=3)[1:3]) == [2, 18]
    assert is_connected(ag.graph).connected


def test_fresh_placement_and_errors():
    g = SocialGraph.from_edges(30, list(nx.cycle_graph(30).edges()))
    ag = inject_adversary(g, AdversaryScenario(g=5, placement="fresh", malicious_nodes=4, seed=1))
    assert ag.graph.n == 34 and ag.g == 5 and ag.m == 4
    with pytest.raises(ScenarioError):
        inject_adversary(g, AdversaryScenario(g=500))
    with pytest.raises(ScenarioError):
        AdversaryScenario()
    with pytest.raises(ScenarioError):
        AdversaryScenario(g=1, capture_fraction=1.5)


def test_degree_attack_errors_and_invariance():
    ag = _cycle_ag()
    with pytest.raises(ScenarioError):
        apply_node_degree_attack(ag, 1)  # M1-M2 already adjacent
    g = SocialGraph.from_edges(60, list(nx.connected_watts_strogatz_graph(60, 4, 0.2, seed=1).edges()))
    ag = inject_adversary(g, AdversaryScenario(malicious_nodes=10, seed=4))
    cl = add_malicious_clique(ag)
    k = ag.m
    e = cl.graph.edges()
    assert int((cl.malicious_mask[e[:, 0]] & cl.malicious_mask[e[:, 1]]).sum()) == k * (k - 1) // 2
    assert _honest_edges(cl.graph) == _honest_edges(ag.graph)
    pi = stationary_distribution(TransitionModel(cl.graph))
    assert pi == pytest.approx(np.full(60, 1 / 60), abs=1e-12)


@given(seed=st.integers(0, 500), frac=st.sampled_from([0.1, 0.25, 0.5, 0.75, 1.0]),
       policy=st.sampled_from(["local", "global"]))
def test_capture_invariants(seed, frac, policy):
    g = SocialGraph.from_edges(80, list(nx.random_regular_graph(4, 80, seed=seed).edges()))
    sc = AdversaryScenario(malicious_nodes=12, seed=seed, blacklist_policy=policy)
    try:
        ag = inject_adversary(g, sc)
    except ScenarioError:
        return
    g0 = ag.g
    cap = apply_route_capture(ag, AdversaryScenario(malicious_nodes=12, seed=seed,
                                                    blacklist_policy=policy, capture_fraction=frac))
    assert _honest_edges(cap.graph) == _honest_edges(ag.graph)
    y = int(round(frac * g0))
    if policy == "local":
        assert len(cap.live_attack_edges) == g0 - y
    else:
        x = len(cap.removed_nodes)
        n = cap.graph.n
        active = cap.graph.degrees > 0
        pi = stationary_distribution(TransitionModel(cap.graph))
        m_left = cap.m
        assert m_left == ag.m - x
        assert float(pi[cap.malicious_mask].sum()) == pytest.approx(m_left / (n - x), abs=1e-12)
        assert active.sum() == n - x


def test_nested_sacrifice_sets():
    g = SocialGraph.from_edges(100, list(nx.random_regular_graph(6, 100, seed=3).edges()))
    ag = inject_adversary(g, AdversaryScenario(malicious_nodes=15, seed=2))
    prev = set()
    for cf in (0.2, 0.4, 0.6):
        cap = apply_route_capture(ag, AdversaryScenario(malicious_nodes=15, seed=2, blacklist_policy="local",
                                                        capture_fraction=cf))
        gone = {tuple(x) for x in cap.deleted_edges}
        assert prev <= gone
        prev = gone


def test_scenario_files(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('g = 40\nsybils_per_edge = 10\ntopology = "chain"\ncapture_fraction = 0.5\n'
                 'policy = "local"\nseed = 9\n')
    sc = load_scenario(p)
    assert sc == AdversaryScenario(g=40, sybils_per_edge=10, malicious_topology="chain",
                                   capture_fraction=0.5, blacklist_policy="local", seed=9)
    with pytest.raises(ScenarioError, match="unknown"):
        scenario_from_mapping({"g": 3, "sybils": 2})
    with pytest.raises(ScenarioError, match="must be"):
        scenario_from_mapping({"g": "3"})
    with pytest.raises(ScenarioError):
        scenario_from_mapping({"g": 3, "policy": "nowhere"})


def test_manifest(tmp_path):
    ag = apply_route_capture(_cycle_ag(), AdversaryScenario(g=2, capture_fraction=0.5))
    write_scenario_manifest(ag, tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "kind,u,v"
    assert sum(r.startswith("attack_edge") for r in rows) == 2
    assert any(r.startswith("removed_node") for r in rows)
