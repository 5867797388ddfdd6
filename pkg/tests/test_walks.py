import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_connected
from oracles import graph_dense, matrix_power
from pisces._config import HONEST, MALICIOUS
from pisces.graph import DisconnectedGraphError, SocialGraph, TransitionModel
from pisces.walks import (
    ChurnModel,
    WalkView,
    propagate,
    relay_survival,
    reverse_hit_probabilities,
    sample_walk,
    sample_walks,
    total_variation,
    transition_power_vector,
    unreliability,
    unreliability_mc,
    write_distribution_csv,
    write_walk_traces_csv,
)

PATH3 = SocialGraph.from_edges(3, [(0, 1), (1, 2)])


def test_zero_length_walk():
    tr = sample_walk(PATH3, 1, 0, np.random.default_rng(0))
    assert list(tr.hops) == [1]
    assert tr.completed and tr.initiator == tr.terminus == 1
    v = transition_power_vector(TransitionModel(PATH3), 2, 0)
    assert list(v) == [0, 0, 1]


def test_path_two_step_law_exact_and_sampled():
    m = TransitionModel(PATH3)
    law = transition_power_vector(m, 0, 2)
    assert law == pytest.approx([0.5, 0.25, 0.25])
    hops, ab = sample_walks(PATH3, np.zeros(1_000_000, np.int64), 2, np.random.default_rng(1))
    assert (ab < 0).all()
    freq = np.bincount(hops[:, -1], minlength=3) / len(hops)
    se = np.sqrt(law * (1 - law) / len(hops))
    assert np.all(np.abs(freq - law) <= 4 * se)


def test_triangle_one_step():
    tri = SocialGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert transition_power_vector(TransitionModel(tri), 1, 1) == pytest.approx([0.5, 0, 0.5])


@pytest.mark.parametrize("seed", range(20))
def test_sparse_iteration_matches_dense_power(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 51))
    g = random_connected(n, float(rng.uniform(0.02, 0.3)), seed)
    m = TransitionModel(g)
    P = graph_dense(g)
    pi = np.full(n, 1 / n)
    j = int(rng.integers(n))
    Pl = np.eye(n)
    for l in range(1, 31):
        Pl = Pl @ P
        np.testing.assert_allclose(transition_power_vector(m, j, l), Pl[j], atol=1e-10, rtol=0)
        np.testing.assert_allclose(reverse_hit_probabilities(m, j, l), Pl[:, j], atol=1e-10, rtol=0)
        flow = pi[:, None] * Pl
        np.testing.assert_allclose(flow, flow.T, atol=1e-10, rtol=0)


def test_reverse_hit_simple_walk_uses_degree_ratio():
    g = SocialGraph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    m = TransitionModel(g, "simple")
    P = graph_dense(g, "simple")
    for l in (0, 1, 3, 7):
        np.testing.assert_allclose(reverse_hit_probabilities(m, 3, l), matrix_power(P, l)[:, 3],
                                   atol=1e-12)


def test_reverse_hit_disconnected_errors():
    g = SocialGraph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(DisconnectedGraphError):
        reverse_hit_probabilities(TransitionModel(g), 0, 3)


@given(seed=st.integers(0, 10_000), l=st.integers(0, 12))
def test_propagation_conserves_mass(seed, l):
    g = random_connected(15, 0.2, seed)
    m = TransitionModel(g)
    v = np.random.default_rng(seed).dirichlet(np.ones(15))
    out = propagate(m, v, l)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)
    assert out.min() >= 0


def test_sampler_matches_exact_law_on_random_graph():
    g = random_connected(30, 0.1, 4)
    m = TransitionModel(g)
    law = transition_power_vector(m, 3, 6)
    hops, _ = sample_walks(g, np.full(200_000, 3), 6, np.random.default_rng(2))
    freq = np.bincount(hops[:, -1], minlength=30) / len(hops)
    assert total_variation(freq, law) < 0.01


def test_simple_kind_sampler():
    g = SocialGraph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    law = transition_power_vector(TransitionModel(g, "simple"), 3, 3)
    hops, _ = sample_walks(WalkView.from_graph(g, "simple"), np.full(200_000, 3), 3,
                           np.random.default_rng(5))
    freq = np.bincount(hops[:, -1], minlength=4) / len(hops)
    assert total_variation(freq, law) < 0.01


def test_offline_node_aborts_walk():
    g = SocialGraph.from_edges(3, [(0, 1), (1, 2)])
    online = np.array([True, False, True])
    hops, ab = sample_walks(g, np.zeros(1000, np.int64), 5, np.random.default_rng(0), online)
    moved = ab >= 0
    assert moved.any()
    assert np.all(hops[moved].max(axis=1) == 0)
    tr = sample_walk(g, 0, 5, np.random.default_rng(3), online)
    assert tr.completed or tr.outcome.startswith("aborted")
    with pytest.raises(ValueError):
        sample_walk(g, 1, 3, np.random.default_rng(0), online)


def test_view_with_rows_serves_fake_lists():
    g = SocialGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    v = WalkView.from_graph(g).with_rows({1: [2]})
    assert list(v.neighbors(1)) == [2]
    assert list(v.neighbors(0)) == [1, 3]
    w = WalkView.from_graph(g).without_edges([(0, 1)])
    assert list(w.neighbors(0)) == [3]
    assert list(w.neighbors(1)) == [0, 2]


def test_churn_examples():
    c = ChurnModel(use_time="fixed", use_delay=3600.0)
    assert unreliability(c, 0) == 0.0
    s = relay_survival(c, 3600.0)
    for l in (1, 5, 25):
        assert unreliability(c, l) == pytest.approx(1 - s ** l)


@pytest.mark.parametrize("rule", ["window", "uniform-remainder", "fixed"])
def test_churn_closed_form_matches_monte_carlo(rule):
    c = ChurnModel(use_time=rule, use_delay=1800.0)
    for l in (1, 10, 25):
        p, se = unreliability_mc(c, l, 200_000, np.random.default_rng(l))
        assert abs(p - unreliability(c, l)) <= 3 * se + 1e-12


def test_churn_calibration_both_regimes():
    tor = unreliability(ChurnModel(24 * 3600.0, 3 * 3600.0), 25)
    p2p = unreliability(ChurnModel(3600.0, 300.0), 25)
    assert 0.02 <= tor <= 0.03
    assert 0.02 <= p2p <= 0.03
    # monotone in walk length and slot duration
    c = ChurnModel()
    vals = [unreliability(c, l) for l in range(0, 40)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert unreliability(ChurnModel(slot_duration=6 * 3600.0), 25) > tor


def test_churn_validation():
    with pytest.raises(ValueError):
        ChurnModel(mean_lifetime=0)
    with pytest.raises(ValueError):
        ChurnModel(use_time="sometime")


def test_csv_writers(tmp_path):
    write_distribution_csv([0.25, 0.75], tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines() == ["node_id,probability", "0,0.25", "1,0.75"]
    labels = np.array([HONEST, MALICIOUS, HONEST])
    tr = sample_walk(PATH3, 0, 2, np.random.default_rng(0), purpose="testing")
    write_walk_traces_csv([tr], labels, tmp_path / "w.csv")
    rows = (tmp_path / "w.csv").read_text().splitlines()
    assert rows[0] == "walk_id,purpose,hop_index,node_id,label"
    assert len(rows) == 4 and rows[1].startswith("0,testing,0,0,honest")
