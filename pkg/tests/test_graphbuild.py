import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qosmgaa.errors import DomainError, SaturationError
from qosmgaa.graphbuild import (NeighborhoodIndex, build_heterogeneous_graph,
                                inject_edge_noise, load_graph, neighborhood,
                                save_graph)

from conftest import attr_table, random_hetero_graph
from oracles import bfs_exact_neighbors


# ---------------------------------------------------------------------------
# construction

def test_two_users_one_country():
    attrs = attr_table(["country"], [["US"], ["US"]])
    g = build_heterogeneous_graph(2, attrs, ["country"])
    assert g.num_nodes == 3
    assert g.num_attribute_nodes == 1
    assert {e for e in g.edges if e[0] != e[1]} == {(0, 2), (1, 2)}
    assert {(i, i) for i in range(3)} <= g.edges


def test_three_users_two_columns(users_us_us_de):
    g = build_heterogeneous_graph(3, users_us_us_de,
                                  ["country", "autonomous_system"])
    # distinct pairs: (country,US), (country,DE), (as,A), (as,B)
    assert g.num_entity_nodes == 3
    assert g.num_attribute_nodes == 4
    assert len(g.non_self_edges()) == 6


def test_empty_schema_degenerates():
    attrs = attr_table([], [[], [], [], []])
    g = build_heterogeneous_graph(4, attrs, [])
    assert g.num_attribute_nodes == 0
    assert g.edges == {(i, i) for i in range(4)}


def test_unknown_values_make_no_node():
    attrs = attr_table(["country"], [["US"], ["unknown"], ["unknown"]])
    g = build_heterogeneous_graph(3, attrs, ["country"])
    assert g.num_attribute_nodes == 1
    assert len(g.non_self_edges()) == 1


def test_row_order_independence(users_us_us_de):
    g1 = build_heterogeneous_graph(3, users_us_us_de,
                                   ["country", "autonomous_system"])
    shuffled = attr_table(["country", "autonomous_system"], [[]] * 0)
    # same rows, inserted in reverse order
    for i in (2, 1, 0):
        shuffled.rows[i] = dict(users_us_us_de.rows[i])
    g2 = build_heterogeneous_graph(3, shuffled, ["country", "autonomous_system"])
    assert g1.edges == g2.edges
    assert g1.attr_label == g2.attr_label


def test_incomplete_coverage_rejected():
    attrs = attr_table(["country"], [["US"]])
    with pytest.raises(DomainError):
        build_heterogeneous_graph(2, attrs, ["country"])


# ---------------------------------------------------------------------------
# neighborhoods

def test_path_graph_neighborhoods(path_graph):
    assert neighborhood(path_graph, 1, 1) == [0, 1, 2]
    assert neighborhood(path_graph, 0, 2) == [2]


def test_isolated_node():
    attrs = attr_table([], [[]])
    g = build_heterogeneous_graph(1, attrs, [])
    assert neighborhood(g, 0, 1) == [0]
    assert neighborhood(g, 0, 2) == []


def test_neighborhood_bad_node(path_graph):
    with pytest.raises(IndexError):
        neighborhood(path_graph, 99, 1)


def test_neighborhood_matches_bfs_oracle_12_nodes():
    g = random_hetero_graph(12, 0.25, seed=3)
    for node in range(12):
        for d in (1, 2, 3):
            assert neighborhood(g, node, d) == bfs_exact_neighbors(
                g.edges, 12, node, d)


def test_index_matches_neighborhood():
    g = random_hetero_graph(15, 0.2, seed=8)
    idx = NeighborhoodIndex(g, 3)
    for node in range(15):
        for d in (1, 2, 3):
            assert idx.neighbors(node, d).tolist() == neighborhood(g, node, d)


def test_index_pairs_consistent():
    g = random_hetero_graph(10, 0.3, seed=1)
    idx = NeighborhoodIndex(g, 2)
    centers, nbrs = idx.pairs(2)
    assert len(centers) == len(nbrs)
    rebuilt = {}
    for c, nb in zip(centers.tolist(), nbrs.tolist()):
        rebuilt.setdefault(c, []).append(nb)
    for node in range(10):
        assert rebuilt.get(node, []) == idx.neighbors(node, 2).tolist()


@settings(max_examples=20, deadline=None)
@given(n=st.integers(4, 50), p=st.floats(0.05, 0.5), seed=st.integers(0, 9999))
def test_bfs_oracle_property(n, p, seed):
    g = random_hetero_graph(n, p, seed=seed)
    idx = NeighborhoodIndex(g, 3)
    rng = np.random.default_rng(seed)
    for node in rng.choice(n, size=min(5, n), replace=False):
        for d in (1, 2, 3):
            assert idx.neighbors(int(node), d).tolist() == bfs_exact_neighbors(
                g.edges, n, int(node), d)


def test_order_disjointness():
    g = random_hetero_graph(20, 0.2, seed=5)
    idx = NeighborhoodIndex(g, 4)
    for node in range(20):
        seen = set()
        for d in range(1, 5):
            cur = set(idx.neighbors(node, d).tolist())
            overlap = cur & seen
            assert overlap <= {node}, f"node {node} order {d} overlaps {overlap}"
            seen |= cur
    with pytest.raises(DomainError):
        idx.neighbors(0, 5)


# ---------------------------------------------------------------------------
# noise injection

def _grid_graph(num_entities=10, num_attrs=8, per_entity=3, seed=0):
    rng = np.random.default_rng(seed)
    attrs = attr_table(["a", "b", "c"],
                       [[f"v{rng.integers(num_attrs)}" for _ in range(per_entity)]
                        for _ in range(num_entities)])
    return build_heterogeneous_graph(num_entities, attrs, ["a", "b", "c"])


def test_noise_zero_identity():
    g = _grid_graph()
    g2 = inject_edge_noise(g, 0.0, seed=1)
    assert g2.edges == g.edges
    assert g2 is not g


def test_noise_count_and_novelty():
    g = _grid_graph(20, 10, 3, seed=2)
    base = set(g.non_self_edges())
    n_replace = int(np.floor(0.25 * len(base)))
    g2 = inject_edge_noise(g, 0.25, seed=7)
    new = set(g2.non_self_edges())
    injected = new - base
    removed = base - new
    assert len(injected) == n_replace
    assert len(removed) == n_replace
    assert not (injected & base)
    assert len(new) == len(base)


def test_noise_preserves_self_loops():
    g = _grid_graph()
    for ratio in (0.0, 0.1, 0.5, 0.9):
        g2 = inject_edge_noise(g, ratio, seed=3)
        assert {(i, i) for i in range(g.num_nodes)} <= g2.edges


def test_noise_deterministic():
    g = _grid_graph(15, 6, 3, seed=4)
    a = inject_edge_noise(g, 0.3, seed=12)
    b = inject_edge_noise(g, 0.3, seed=12)
    assert a.edges == b.edges


def test_noise_saturation():
    # complete bipartite entity-attribute graph: nowhere to put replacements
    attrs = attr_table(["a", "b"], [["x", "y"], ["x", "y"]])
    g = build_heterogeneous_graph(2, attrs, ["a", "b"])
    assert len(g.non_self_edges()) == 4  # saturated: 2 entities x 2 attrs
    with pytest.raises(SaturationError):
        inject_edge_noise(g, 0.5, seed=0)


def test_noise_ratio_domain():
    g = _grid_graph()
    with pytest.raises(DomainError):
        inject_edge_noise(g, 1.0, seed=0)


# ---------------------------------------------------------------------------
# export / import

def test_graph_file_roundtrip(tmp_path, users_us_us_de):
    g = build_heterogeneous_graph(3, users_us_us_de,
                                  ["country", "autonomous_system"])
    p = tmp_path / "graph.txt"
    save_graph(g, p)
    g2 = load_graph(p)
    assert g2.edges == g.edges
    assert g2.num_entity_nodes == g.num_entity_nodes
    assert g2.num_attribute_nodes == g.num_attribute_nodes
    assert g2.attr_label == g.attr_label
