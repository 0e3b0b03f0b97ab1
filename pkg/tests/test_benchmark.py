"""
End-to-end checks on a regenerated synthetic benchmark. Each takes minutes to hours; run with --runslow.
"""

import collections

import numpy as np
import pytest

from coupledgnn import baseline, cascades, features, graph, metrics, model, train
from coupledgnn.graph import KroneckerConfig

SEED = 11
SWEEP_BASE = train.TrainConfig(K=3, lr_self_activation=1e-3, lr_other=5e-3, l2_coeff=1e-6, max_epochs=200,
                               patience=10)


@pytest.fixture(scope='module')
def benchmark():
    g, _ = graph.largest_connected_component(graph.generate_kronecker(KroneckerConfig(iterations=10, rng_seed=SEED)))
    ds = cascades.generate_dataset(g, 20000, min_active=3, split=(0.8, 0.1, 0.1), rng_seed=SEED, t_observe=2)
    r0 = features.build_r0(features.deepwalk_embeddings(g, rng_seed=SEED), features.compute_node_features(g))
    return ds, r0


def coupled_test_mrse(ds, r0, cfg):
    params, _ = train.fit(ds, r0, cfg)
    test = ds.subset('test')
    return metrics.mrse(model.predict(ds.graph, params, test, r0), [c.final_size for c in test])


@pytest.mark.slow
def test_coupled_model_beats_feature_baseline(benchmark):
    ds, r0 = benchmark
    grids = dict(K=[2, 3], lr_self_activation=[1e-4, 1e-3], lr_other=[1e-3, 5e-3], l2_coeff=[1e-6], lam=[0.5])
    best, table = train.grid_search(ds, r0, grids=grids, base=SWEEP_BASE)
    assert len(table) == 8
    coupled = coupled_test_mrse(ds, r0, best)

    sets = {name: baseline.feature_set(ds.graph, ds.subset(name)) for name in cascades.SPLITS}
    pred, _, _ = baseline.tune_baseline(sets['train'], sets['val'], sets['test'], lr_dense=[1e-3, 5e-3],
                                        n_nodes=ds.graph.n_nodes)
    feature_based = metrics.mrse(pred, sets['test'].final_size)

    assert coupled < feature_based
    assert coupled <= 0.15


@pytest.mark.slow
def test_heaviest_user_loss_weight_is_worst(benchmark):
    ds, r0 = benchmark
    val = dict()
    for lam in (0.0, 0.5, 1.0, 10.0, 20.0):
        _, log = train.fit(ds, r0, SWEEP_BASE.replace(lam=lam))
        val[lam] = min(rec['val_mrse'] for rec in log)
    assert max(val, key=val.get) == 20.0


@pytest.mark.slow
def test_later_adopters_are_near_early_adopters(benchmark):
    ds, _ = benchmark
    hist = collections.Counter()
    for c in ds.cascades:
        later = np.setdiff1d(c.final_index, c.observed_index)
        if later.size:
            hist.update(graph.hop_distance_distribution(ds.graph, c.observed_index, later))
    assert graph.coverage_within(hist, 3) >= 0.95
