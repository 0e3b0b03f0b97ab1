import numpy as np
import pytest
from sklearn.preprocessing import StandardScaler

from coupledgnn import baseline
from conftest import make_cascade, make_graph, random_cascades, random_graph


def features_of(g, observed):
    cascade = make_cascade('a', [(v, 0) for v in observed])
    return dict(zip(baseline.DENSE_NAMES, baseline.extract_features(g, cascade).dense))


def test_dense_names():
    assert len(baseline.DENSE_NAMES) == 14
    assert len(set(baseline.DENSE_NAMES)) == 14


def test_triangle_features(triangle):
    f = features_of(triangle, [0, 1, 2])
    assert f['gc_mean_degree'] == 2.0
    assert f['gc_p90_degree'] == 2.0
    assert f['gc_leaves'] == 0.0
    assert f['gc_density'] == 1.0
    assert (f['gc_nodes'], f['gc_edges'], f['gc_triangles']) == (3, 3, 1)
    assert f['gc_communities'] == 1
    assert f['gc_coverage'] == 1.0
    assert all(f['gf_' + s] == 0 for s in baseline.SUBGRAPH_STATS)


def test_star_features():
    g = make_graph(5, [(0, i) for i in range(1, 5)])
    f = features_of(g, range(5))
    assert f['gc_leaves'] == 4
    assert f['gc_mean_degree'] == pytest.approx(1.6)
    assert f['gc_density'] == pytest.approx(0.4)
    assert f['gc_triangles'] == 0


def test_two_triangles_form_two_communities():
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)]
    f = features_of(make_graph(6, edges), range(6))
    assert f['gc_communities'] == 2
    assert f['gc_coverage'] == 1.0
    assert f['gc_triangles'] == 2


def test_frontier_of_path(path_graph):
    g_c, g_f = baseline.build_subgraphs(path_graph, make_cascade('a', [(0, 0), (1, 0)]))
    assert g_c.node_ids == ('0', '1')
    assert g_f.node_ids == ('2',)
    f = features_of(path_graph, [0])
    assert f['gc_nodes'] == 1 and f['gc_edges'] == 0
    assert f['gc_communities'] == 1 and f['gc_coverage'] == 0.0
    assert f['gf_nodes'] == 1


def test_sparse_block_holds_early_adopters(path_graph):
    cascade = make_cascade('a', [(2, 0), (0, 0), (3, 1)])
    np.testing.assert_array_equal(baseline.extract_features(path_graph, cascade).sparse, [0, 2])


def test_feature_set_of_dataset(small_dataset):
    fs = baseline.feature_set(small_dataset.graph, small_dataset.cascades)
    assert len(fs) == 12
    assert fs.dense.shape == (12, 14)
    s = fs.indicator_matrix(small_dataset.graph.n_nodes)
    np.testing.assert_array_equal(np.asarray(s.sum(axis=1)).ravel(), fs.observed_size)


def make_set(dense, final, observed=None):
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim == 1:
        dense = dense[:, None]
    final = np.asarray(final, dtype=np.float64)
    observed = np.ones_like(final) if observed is None else np.asarray(observed, dtype=np.float64)
    return baseline.FeatureSet(ids=['c{}'.format(i) for i in range(len(final))], dense=dense,
                               sparse=[np.zeros(0, dtype=np.int64) for _ in final], observed_size=observed,
                               final_size=final)


def test_constant_targets_are_fit_exactly():
    rng = np.random.default_rng(0)
    train = make_set(rng.normal(size=(20, 3)), np.full(20, 7.0))
    val = make_set(rng.normal(size=(5, 3)), np.full(5, 7.0))
    test = make_set(rng.normal(size=(5, 3)), np.full(5, 7.0))
    pred, fitted = baseline.ridge_fit_predict(train, val, test, n_nodes=4, max_epochs=20)
    np.testing.assert_allclose(pred, 7.0)
    assert fitted.val_mrse == pytest.approx(0.0, abs=1e-20)


def test_realizable_target_needs_a_large_dense_rate():
    x = np.linspace(0, 10, 40)
    train = make_set(x, 20 + 3 * x)
    xv = np.linspace(0.5, 9.5, 10)
    val = make_set(xv, 20 + 3 * xv)
    _, fast = baseline.ridge_fit_predict(train, val, None, lr_dense=0.05, l2=0.0, n_nodes=3, max_epochs=2000,
                                         patience=100)
    _, slow = baseline.ridge_fit_predict(train, val, None, lr_dense=1e-4, l2=0.0, n_nodes=3, max_epochs=200,
                                         patience=100)
    assert fast.val_mrse < 1e-3
    assert fast.val_mrse < slow.val_mrse


def test_predictions_are_clipped_at_observed_size():
    fs = make_set(np.zeros((3, 1)), [10.0, 10.0, 10.0], observed=[2.0, 5.0, 0.5])
    model = baseline.BaselineModel(scaler=StandardScaler().fit(np.zeros((3, 1))),
                                   weights={'bias': np.asarray(1.0), 'w_dense': np.zeros(1), 'w_sparse': np.zeros(2)},
                                   n_nodes=2)
    np.testing.assert_array_equal(model.predict(fs), [2.0, 5.0, 1.0])


def test_objective_grows_with_l2():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 2))
    s = np.zeros((6, 3))
    y = rng.uniform(1, 10, size=6)
    weights = {'bias': np.asarray(2.0), 'w_dense': np.array([0.5, -1.0]), 'w_sparse': np.array([0.1, 0.0, 0.3])}
    values = [baseline.objective(weights, x, s, y, l2) for l2 in (0.0, 0.1, 1.0)]
    assert values[0] < values[1] < values[2]
    assert values[2] - values[0] == pytest.approx(1.0 + 0.25 + 0.09 + 0.01)


def test_fit_needs_train_and_val():
    empty = make_set(np.zeros((0, 1)), [])
    full = make_set(np.zeros((3, 1)), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        baseline.ridge_fit_predict(empty, full, None, n_nodes=2)


def test_tuning_keeps_best_validation_fit():
    x = np.linspace(0, 10, 40)
    train = make_set(x, 20 + 3 * x)
    val = make_set(x[::4] + 0.1, 20 + 3 * (x[::4] + 0.1))
    pred, best, table = baseline.tune_baseline(train, val, val, lr_dense=[1e-4, 0.05], l2=[0.0], n_nodes=3,
                                               max_epochs=300, patience=100)
    assert len(table) == 2
    assert best.val_mrse == pytest.approx(table['val_mrse'].min())
    assert pred.shape == (10,)


@pytest.mark.parametrize('seed', range(5))
def test_cascade_and_frontier_graphs_are_disjoint(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 15, 40)
    for cascade in random_cascades(rng, g, 10):
        g_c, g_f = baseline.build_subgraphs(g, cascade)
        observed = {g.node_ids[v] for v in cascade.observed_active}
        assert set(g_c.node_ids) == observed
        assert not set(g_c.node_ids) & set(g_f.node_ids)


def test_zero_community_size_is_rejected(triangle):
    with pytest.raises(ValueError):
        baseline.extract_features(triangle, make_cascade('a', [(0, 0)]), min_community_size=0)
