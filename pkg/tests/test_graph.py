import math

import numpy as np
import pytest
import scipy.sparse as sp

from coupledgnn import graph
from coupledgnn.common import EdgeDropoutError, GraphError
from conftest import make_graph


def test_from_edges_drops_loops_and_duplicates():
    g = make_graph(3, [(0, 1), (0, 1), (1, 1), (1, 2)])
    assert g.n_edges == 2
    np.testing.assert_array_equal(g.edges(), [[0, 1], [1, 2]])
    np.testing.assert_array_equal(g.in_degree(), [0, 1, 1])
    np.testing.assert_array_equal(g.out_degree(), [1, 1, 0])


def test_from_edges_rejects_out_of_range():
    with pytest.raises(GraphError):
        make_graph(2, [(0, 2)])


def test_graph_arrays_are_read_only(path_graph):
    with pytest.raises(ValueError):
        path_graph.out_indices[0] = 3


def test_in_neighbors(triangle):
    np.testing.assert_array_equal(triangle.in_neighbors(0), [2])
    np.testing.assert_array_equal(triangle.out_neighbors(0), [1])


def test_kronecker_all_ones_is_complete():
    g = graph.generate_kronecker(graph.KroneckerConfig(seed_matrix=((1, 1), (1, 1)), iterations=2))
    assert g.n_nodes == 4
    assert g.n_edges == 12


def test_kronecker_all_zeros_is_empty():
    g = graph.generate_kronecker(graph.KroneckerConfig(seed_matrix=((0, 0), (0, 0)), iterations=3))
    assert g.n_nodes == 8
    assert g.n_edges == 0


def test_expected_kronecker_edges():
    cfg = graph.KroneckerConfig(iterations=2)
    # (0.9 + 0.5 + 0.5 + 0.1)^2 - (0.9 + 0.1)^2
    assert graph.expected_kronecker_edges(cfg) == pytest.approx(3.0)


def test_kronecker_edge_count_near_expectation():
    cfg = graph.KroneckerConfig(iterations=9, rng_seed=5)
    g = graph.generate_kronecker(cfg)
    expected = graph.expected_kronecker_edges(cfg)
    assert abs(g.n_edges - expected) < 5 * math.sqrt(expected)


def test_kronecker_same_seed_same_graph():
    a = graph.generate_kronecker(graph.KroneckerConfig(iterations=7, rng_seed=1))
    b = graph.generate_kronecker(graph.KroneckerConfig(iterations=7, rng_seed=1))
    np.testing.assert_array_equal(a.edges(), b.edges())


def test_kronecker_limits():
    with pytest.raises(GraphError):
        graph.generate_kronecker(graph.KroneckerConfig(iterations=21))
    with pytest.raises(ValueError):
        graph.generate_kronecker(graph.KroneckerConfig(iterations=0))
    with pytest.raises(GraphError):
        graph.KroneckerConfig(seed_matrix=((1.5, 0), (0, 0)))


def test_lcc_ties_go_to_smallest_index():
    g = make_graph(7, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    sub, old_to_new = graph.largest_connected_component(g)
    assert sub.node_ids == ('0', '1', '2')
    assert sub.n_edges == 3
    np.testing.assert_array_equal(old_to_new, [0, 1, 2, -1, -1, -1, -1])


def test_lcc_of_path_drops_isolated_node():
    g = make_graph(4, [(0, 1), (1, 2)])
    sub, _ = graph.largest_connected_component(g)
    assert sub.node_ids == ('0', '1', '2')


def test_lcc_of_connected_graph_is_identity(triangle):
    sub, old_to_new = graph.largest_connected_component(triangle)
    np.testing.assert_array_equal(sub.edges(), triangle.edges())
    np.testing.assert_array_equal(old_to_new, [0, 1, 2])


def test_lcc_of_empty_graph():
    with pytest.raises(GraphError):
        graph.largest_connected_component(make_graph(0, []))


def test_induced_subgraph_keeps_external_ids():
    g = make_graph(4, [(0, 1), (1, 2), (2, 3)], node_ids=['a', 'b', 'c', 'd'])
    sub, old_to_new = g.induced_subgraph([1, 2, 3])
    assert sub.node_ids == ('b', 'c', 'd')
    np.testing.assert_array_equal(sub.edges(), [[0, 1], [1, 2]])
    assert old_to_new[0] == -1


def test_drop_edges_zero_fraction_returns_graph(triangle):
    assert graph.drop_edges_connected(triangle, 0.0, 1) is triangle


def test_drop_edges_on_tree_fails():
    tree = make_graph(10, [(i, i + 1) for i in range(9)])
    with pytest.raises(EdgeDropoutError) as info:
        graph.drop_edges_connected(tree, 0.2, 0)
    assert info.value.achieved_fraction == 0.0


def test_drop_edges_keeps_connectivity():
    g, _ = graph.largest_connected_component(graph.generate_kronecker(graph.KroneckerConfig(iterations=8,
                                                                                             rng_seed=2)))
    for fraction in (0.05, 0.1, 0.2):
        reduced = graph.drop_edges_connected(g, fraction, 4)
        assert reduced.n_edges == g.n_edges - math.floor(fraction * g.n_edges)
        assert graph.is_connected_undirected(reduced)
        assert reduced.n_nodes == g.n_nodes


def test_drop_edges_fraction_range(triangle):
    with pytest.raises(ValueError):
        graph.drop_edges_connected(triangle, 1.0, 0)


def test_hop_distances_on_path(path_graph):
    assert graph.hop_distance_distribution(path_graph, [0], [2]) == {2: 1}
    assert graph.hop_distance_distribution(path_graph, [0], [1, 2, 3]) == {1: 1, 2: 1, 3: 1}


def test_hop_distances_of_sources_are_zero(path_graph):
    assert graph.hop_distance_distribution(path_graph, [0, 1], [0, 1]) == {0: 2}


def test_hop_distances_unreachable():
    g = make_graph(3, [(0, 1)])
    hist = graph.hop_distance_distribution(g, [0], [1, 2])
    assert hist == {1: 1, math.inf: 1}
    assert graph.coverage_within(hist, 3) == 0.5


def test_hop_distances_need_sources(path_graph):
    with pytest.raises(ValueError):
        graph.hop_distance_distribution(path_graph, [], [1])


def test_kronecker_binary_seed_is_kronecker_power():
    seed = np.array([[1, 0], [1, 1]])
    g = graph.generate_kronecker(graph.KroneckerConfig(seed_matrix=((1, 0), (1, 1)), iterations=3, rng_seed=4))
    expected = np.kron(np.kron(seed, seed), seed)
    np.fill_diagonal(expected, 0)
    np.testing.assert_array_equal(g.adjacency().toarray() != 0, expected == 1)


@pytest.mark.parametrize('seed', range(5))
def test_in_index_is_transpose_of_out_index(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    m = int(rng.integers(0, 4 * n))
    g = make_graph(n, np.column_stack([rng.integers(0, n, m), rng.integers(0, n, m)]))
    src, dst = g.src, g.dst
    for v in range(n):
        np.testing.assert_array_equal(g.in_neighbors(v), np.sort(src[dst == v]))
    np.testing.assert_array_equal(g.in_degree(), np.bincount(dst, minlength=n))
    assert g.in_degree().sum() == g.out_degree().sum() == g.n_edges
    in_csr = sp.csr_matrix((np.ones(g.n_edges), g.in_indices, g.in_indptr), shape=(n, n))
    assert (in_csr != g.adjacency().T).nnz == 0
