#! /usr/bin/env python

"""
Feature-based popularity baseline: structural features of the early adopters' subgraph and of their one-hop frontier,
plus indicators of which users adopted early, fed to a linear model trained on the relative squared error with L2.
"""

import concurrent.futures
import dataclasses
import itertools
import logging
import math

import networkx as nx
import numpy as np
import pandas as pd
import scipy.sparse as sp
from sklearn.preprocessing import StandardScaler

from coupledgnn import configs
from coupledgnn import metrics
from coupledgnn.common import BaselineDiverged
from coupledgnn.train import OptimizerState, TrainConfig, adam_step

logger = logging.getLogger(__name__)

SUBGRAPH_STATS = ('nodes', 'edges', 'triangles', 'communities', 'coverage')
DENSE_NAMES = (('gc_mean_degree', 'gc_p90_degree', 'gc_leaves', 'gc_density')
               + tuple('gc_' + s for s in SUBGRAPH_STATS) + tuple('gf_' + s for s in SUBGRAPH_STATS))


@dataclasses.dataclass(frozen=True, eq=False)
class CascadeFeatures:
    dense: np.ndarray
    sparse: np.ndarray  # sorted global indices of the early adopters


@dataclasses.dataclass(eq=False)
class FeatureSet:
    """features and targets of a list of cascades"""
    ids: list
    dense: np.ndarray
    sparse: list
    observed_size: np.ndarray
    final_size: np.ndarray

    def __len__(self):
        return len(self.ids)

    def indicator_matrix(self, n_nodes):
        rows = np.repeat(np.arange(len(self.sparse)), [len(s) for s in self.sparse])
        cols = np.concatenate([np.asarray(s, dtype=np.int64) for s in self.sparse]) if self.sparse else np.zeros(0)
        return sp.csr_matrix((np.ones(rows.size), (rows, cols.astype(np.int64))), shape=(len(self.sparse), n_nodes))


def build_subgraphs(g, cascade):
    """
    Cascade graph on the early adopters and frontier graph on their out-neighbours that are not adopters
    :returns (g_c, g_f) as Graph objects carrying the original external ids
    """
    adopters = cascade.observed_index
    g_c, _ = g.induced_subgraph(adopters)
    _, targets = g.out_edges_of(adopters)
    frontier = np.setdiff1d(np.unique(targets), adopters)
    g_f, _ = g.induced_subgraph(frontier)
    return g_c, g_f


def _communities(und, min_size):
    """community count and share of nodes in communities of at least min_size"""
    n = und.number_of_nodes()
    if n == 0:
        return 0, 0.0
    if und.number_of_edges() == 0:
        return n, 0.0
    parts = nx.community.greedy_modularity_communities(und)
    covered = sum(len(c) for c in parts if len(c) >= min_size)
    return len(parts), covered / n


def _subgraph_stats(sub, min_size):
    und = sub.to_networkx(directed=False)
    triangles = sum(nx.triangles(und).values()) // 3
    count, coverage = _communities(und, min_size)
    return [sub.n_nodes, sub.n_edges, triangles, count, coverage]


def extract_features(g, cascade, min_community_size=None):
    """
    Fourteen dense structural features and the sparse early-adopter block of one cascade. Degrees are total degrees
    within the cascade graph and a leaf has total degree 1; density is measured on the undirected projection.
    :returns CascadeFeatures
    """
    min_size = configs.baseline['min_community_size'] if min_community_size is None else min_community_size
    if min_size < 1:
        raise ValueError('min_community_size must be >= 1')
    g_c, g_f = build_subgraphs(g, cascade)
    deg = (g_c.in_degree() + g_c.out_degree()).astype(np.float64)
    n = g_c.n_nodes
    und_edges = g_c.undirected().nnz // 2
    density = und_edges / (n * (n - 1) / 2) if n > 1 else 0.0
    dense = [deg.mean() if n else 0.0, np.percentile(deg, 90) if n else 0.0, float(np.sum(deg == 1)), density]
    dense += _subgraph_stats(g_c, min_size)
    dense += _subgraph_stats(g_f, min_size)
    return CascadeFeatures(dense=np.array(dense, dtype=np.float64), sparse=cascade.observed_index.copy())


def _extract_range(g, cascade_list, min_size):
    return [extract_features(g, c, min_size) for c in cascade_list]


def feature_set(g, cascade_list, min_community_size=None, threads=1):
    """
    Features of many cascades, optionally across worker processes
    :returns FeatureSet
    """
    if threads > 1 and len(cascade_list) > threads:
        chunks = [list(c) for c in np.array_split(np.arange(len(cascade_list)), threads * 4)]
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_extract_range, g, [cascade_list[i] for i in chunk], min_community_size)
                       for chunk in chunks]
            feats = [f for fut in futures for f in fut.result()]
    else:
        feats = _extract_range(g, cascade_list, min_community_size)
    dense = np.stack([f.dense for f in feats]) if feats else np.zeros((0, len(DENSE_NAMES)))
    return FeatureSet(ids=[c.id for c in cascade_list], dense=dense, sparse=[f.sparse for f in feats],
                      observed_size=np.array([c.observed_size for c in cascade_list], dtype=np.float64),
                      final_size=np.array([c.final_size for c in cascade_list], dtype=np.float64))


@dataclasses.dataclass(eq=False)
class BaselineModel:
    scaler: StandardScaler
    weights: dict
    n_nodes: int
    val_mrse: float = math.nan
    epochs: int = 0

    def raw_predict(self, fs):
        x = self.scaler.transform(fs.dense)
        s = fs.indicator_matrix(self.n_nodes)
        return self.weights['bias'] + x @ self.weights['w_dense'] + s @ self.weights['w_sparse']

    def predict(self, fs):
        """predictions clipped below at the observed size"""
        return np.maximum(self.raw_predict(fs), fs.observed_size)


def objective(weights, x, s, y, l2):
    """relative squared error plus l2 times the squared norm of the feature weights"""
    pred = weights['bias'] + x @ weights['w_dense'] + s @ weights['w_sparse']
    penalty = float(np.sum(weights['w_dense'] ** 2) + np.sum(weights['w_sparse'] ** 2))
    return float(np.mean(((pred - y) / y) ** 2)) + l2 * penalty


def ridge_fit_predict(train, val, test, lr_sparse=None, lr_dense=None, l2=None, n_nodes=None, max_epochs=None,
                      patience=None):
    """
    Fit the linear baseline by full-batch Adam on the relative squared error plus L2, with early stopping on
    validation MRSE. Node-id weights use lr_sparse, the dense weights and bias use lr_dense.
    :param train: FeatureSet
    :param val: FeatureSet
    :param test: FeatureSet or None
    :param n_nodes: width of the node-id block
    :returns (test predictions or None, BaselineModel with the best validation MRSE)
    """
    bcfg = configs.baseline
    lr_sparse = bcfg['lr_sparse'] if lr_sparse is None else lr_sparse
    lr_dense = bcfg['lr_dense'] if lr_dense is None else lr_dense
    l2 = bcfg['l2'] if l2 is None else l2
    max_epochs = bcfg['max_epochs'] if max_epochs is None else max_epochs
    patience = bcfg['patience'] if patience is None else patience
    if l2 < 0 or max_epochs < 0 or patience < 1:
        raise ValueError('l2 and max_epochs must be >= 0 and patience >= 1')
    if not len(train) or not len(val):
        raise ValueError('the baseline needs nonempty train and val sets')
    if n_nodes is None:
        n_nodes = 1 + max(int(s.max()) for s in train.sparse + val.sparse + (test.sparse if test else []) if s.size)
    lrs = TrainConfig(lr_self_activation=lr_sparse, lr_other=lr_dense)

    scaler = StandardScaler().fit(train.dense)
    x = scaler.transform(train.dense)
    s = train.indicator_matrix(n_nodes)
    y = train.final_size
    weights = {'bias': np.asarray(np.sum(1.0 / y) / np.sum(1.0 / y ** 2)),
               'w_dense': np.zeros(x.shape[1]), 'w_sparse': np.zeros(n_nodes)}
    state = OptimizerState.zeros(weights)

    best = BaselineModel(scaler=scaler, weights=weights, n_nodes=n_nodes)
    best.val_mrse = metrics.mrse(best.predict(val), val.final_size)
    stale = 0
    for epoch in range(1, max_epochs + 1):
        pred = weights['bias'] + x @ weights['w_dense'] + s @ weights['w_sparse']
        r = 2.0 / y.size * (pred - y) / y ** 2
        grads = {'bias': np.asarray(r.sum()),
                 'w_dense': x.T @ r + 2.0 * l2 * weights['w_dense'],
                 'w_sparse': s.T @ r + 2.0 * l2 * weights['w_sparse']}
        weights, state = adam_step(weights, grads, state, lrs, sparse_keys=('w_sparse',))
        current = BaselineModel(scaler=scaler, weights=weights, n_nodes=n_nodes, epochs=epoch)
        val_pred = current.predict(val)
        if not (np.all(np.isfinite(val_pred)) and all(np.all(np.isfinite(w)) for w in weights.values())):
            norm = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
            raise BaselineDiverged('baseline diverged at epoch {} (gradient norm {:.3e}, lr_sparse {}, lr_dense {})'
                                   .format(epoch, norm, lr_sparse, lr_dense))
        current.val_mrse = metrics.mrse(val_pred, val.final_size)
        if current.val_mrse < best.val_mrse:
            best, stale = current, 0
        else:
            stale += 1
            if stale >= patience:
                break
    logger.info('baseline: val MRSE %.5f after %d epochs (lr_sparse %g, lr_dense %g, l2 %g)', best.val_mrse,
                best.epochs, lr_sparse, lr_dense, l2)
    return (best.predict(test) if test is not None else None), best


def tune_baseline(train, val, test, lr_sparse=None, lr_dense=None, l2=None, n_nodes=None, **kwargs):
    """
    Fit every combination of the given learning rates and L2 coefficients and keep the best on validation
    :returns (test predictions, best BaselineModel, pandas DataFrame of val MRSE per combination)
    """
    lr_sparse = [configs.baseline['lr_sparse']] if lr_sparse is None else lr_sparse
    lr_dense = [configs.baseline['lr_dense']] if lr_dense is None else lr_dense
    l2 = l2 or [configs.baseline['l2']]
    rows, best, best_key = [], None, None
    for ls, ld, reg in itertools.product(lr_sparse, lr_dense, l2):
        try:
            _, fitted = ridge_fit_predict(train, val, None, ls, ld, reg, n_nodes=n_nodes, **kwargs)
            val_mrse = fitted.val_mrse
        except BaselineDiverged as err:
            logger.warning('%s', err)
            fitted, val_mrse = None, math.inf
        rows.append(dict(lr_sparse=ls, lr_dense=ld, l2=reg, val_mrse=val_mrse))
        if fitted is not None and (best is None or val_mrse < best.val_mrse):
            best, best_key = fitted, (ls, ld, reg)
    if best is None:
        raise BaselineDiverged('every baseline configuration diverged')
    logger.info('best baseline: lr_sparse %g, lr_dense %g, l2 %g', *best_key)
    pred = best.predict(test) if test is not None else None
    return pred, best, pd.DataFrame(rows)
