import networkx as nx
import numpy as np
import pydot
import pytest

from mllandscape.graphnet import (build_graph, connected_components, export_dot, graph_from_edges,
                                 graph_stats)
from mllandscape.landscape import LandscapeDatabase, superbasin_partition


def _floyd_warshall(n, edges):
    D = np.full((n, n), np.inf)
    np.fill_diagonal(D, 0.0)
    for a, b in edges:
        D[a, b] = D[b, a] = 1.0
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    return D


def _random_graph(rng):
    n = int(rng.integers(1, 13))
    p = rng.uniform(0.05, 0.7)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return n, edges


def test_multiple_ts_give_one_edge_and_self_loops_none():
    db = LandscapeDatabase()
    a = db.add_minimum(0.0, [0.0])
    b = db.add_minimum(0.1, [1.0])
    for k in range(3):
        db.add_transition_state(1.0 + k, [0.5 + k], -1.0, (a, b))
    db.add_transition_state(0.5, [5.0], -1.0, (a, a))
    g = build_graph(db)
    assert g.edges == ((a, b),)
    assert graph_stats(g)["avg_degree"] == 1.0


def test_empty_graph():
    s = graph_stats(build_graph(LandscapeDatabase()))
    assert s["n_nodes"] == 0 and s["avg_shortest_path"] is None and s["diameter"] is None


def test_single_node_has_undefined_path():
    s = graph_stats(graph_from_edges([7], []))
    assert s["avg_shortest_path"] is None and s["n_components"] == 1


def test_path_graph():
    s = graph_stats(graph_from_edges([1, 2, 3], [(1, 2), (2, 3)]))
    assert s["avg_degree"] == pytest.approx(4 / 3)
    assert s["avg_shortest_path"] == pytest.approx(4 / 3)
    assert s["diameter"] == 2
    assert s["global_clustering"] == 0.0


def test_complete_graph():
    s = graph_stats(graph_from_edges(range(4), [(i, j) for i in range(4) for j in range(i + 1, 4)]))
    assert s["avg_shortest_path"] == 1.0 and s["diameter"] == 1
    assert s["global_clustering"] == 1.0 and s["degree_histogram"] == [0, 0, 0, 4]


def test_shortest_paths_against_floyd_warshall():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, edges = _random_graph(rng)
        D = _floyd_warshall(n, edges)
        finite = np.isfinite(D) & ~np.eye(n, dtype=bool)
        s = graph_stats(graph_from_edges(range(n), edges))
        if finite.any():
            assert s["avg_shortest_path"] == pytest.approx(D[finite].mean(), rel=1e-12)
            assert s["diameter"] == int(D[finite].max())
        else:
            assert s["avg_shortest_path"] is None


def test_clustering_matches_networkx():
    for seed in range(30):
        rng = np.random.default_rng(1000 + seed)
        n, edges = _random_graph(rng)
        G = nx.Graph()
        G.add_nodes_from(range(n))
        G.add_edges_from(edges)
        s = graph_stats(graph_from_edges(range(n), edges))
        assert s["global_clustering"] == pytest.approx(nx.transitivity(G), abs=1e-12)
        assert s["mean_local_clustering"] == pytest.approx(nx.average_clustering(G), abs=1e-12)
        assert s["n_components"] == nx.number_connected_components(G)


def test_components_equal_partition_at_infinity():
    rng = np.random.default_rng(3)
    db = LandscapeDatabase()
    for i in range(10):
        db.add_minimum(float(rng.random()), [float(i)])
    for k in range(6):
        a, b = rng.choice(10, 2, replace=False)
        db.add_transition_state(2.0 + k, [50.0 + k], -1.0, (a, b))
    comps = sorted(sorted(c) for c in connected_components(build_graph(db)))
    parts = sorted(sorted(p) for p in superbasin_partition(db, np.inf))
    assert comps == parts


def test_dot_export(tmp_path):
    g = graph_from_edges([0, 1], [(0, 1)])
    text = export_dot(g, tmp_path / "g.dot")
    body = [l for l in text.splitlines() if l.startswith("  ")]
    assert sum("--" in l for l in body) == 1 and sum("degree=" in l for l in body) == 2
    assert export_dot(g) == text == (tmp_path / "g.dot").read_text()
    (parsed,) = pydot.graph_from_dot_data(text)
    assert len(parsed.get_edges()) == 1
    assert {n.get_name() for n in parsed.get_nodes()} >= {"0", "1"}
