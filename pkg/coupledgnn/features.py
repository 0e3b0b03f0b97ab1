#! /usr/bin/env python

"""
Per-node inputs of the influence network: six structural features and DeepWalk embeddings, and their concatenation
into the initial influence representation.
"""

import dataclasses
import hashlib
import logging

import networkx as nx
import numpy as np
from gensim.models import Word2Vec
from sklearn.preprocessing import StandardScaler

from coupledgnn import configs
from coupledgnn.common import ConvergenceError, GraphError, derive_seed, make_rng

logger = logging.getLogger(__name__)

FEATURE_NAMES = ('coreness', 'pagerank', 'hub', 'authority', 'eigenvector', 'clustering')


@dataclasses.dataclass(frozen=True, eq=False)
class NodeFeatures:
    values: np.ndarray
    names: tuple = FEATURE_NAMES

    def column(self, name):
        return self.values[:, self.names.index(name)]


@dataclasses.dataclass(frozen=True, eq=False)
class NodeEmbeddings:
    values: np.ndarray

    @property
    def dim(self):
        return self.values.shape[1]


def pagerank(g, damping=None, tol=None, max_iter=None):
    """
    PageRank by power iteration along edge direction; rank of dangling nodes is spread uniformly
    :param g: Graph
    :param damping: damping factor, default 0.85
    :param tol: L1 residual at which iteration stops, default 1e-9
    :param max_iter: iteration limit, default 10,000
    :returns array of ranks summing to 1
    """
    damping = configs.centrality['damping'] if damping is None else damping
    if not 0 <= damping < 1:
        raise ValueError('damping must lie in [0, 1), got {}'.format(damping))
    tol = configs.centrality['tol'] if tol is None else tol
    max_iter = configs.centrality['max_iter'] if max_iter is None else max_iter
    _check_iteration(tol, max_iter)
    n = g.n_nodes
    at = g.adjacency().T.tocsr()
    outdeg = g.out_degree().astype(np.float64)
    dangling = outdeg == 0
    inv_out = np.divide(1.0, outdeg, out=np.zeros(n), where=~dangling)

    x = np.full(n, 1.0 / n)
    residual = np.inf
    for it in range(max_iter):
        new = damping * (at @ (x * inv_out)) + (damping * x[dangling].sum() + 1.0 - damping) / n
        residual = np.abs(new - x).sum()
        x = new
        if residual < tol:
            logger.debug('pagerank converged after %d iterations', it + 1)
            return x / x.sum()
    raise ConvergenceError('pagerank', max_iter, residual)


def _check_iteration(tol, max_iter):
    if tol <= 0 or max_iter < 1:
        raise ValueError('tol must be > 0 and max_iter >= 1')


def _normalized(x):
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def hits(g, tol=None, max_iter=None):
    """
    Hub and authority scores by power iteration, each L2-normalised
    :returns (hub, authority)
    """
    tol = configs.centrality['tol'] if tol is None else tol
    max_iter = configs.centrality['max_iter'] if max_iter is None else max_iter
    _check_iteration(tol, max_iter)
    n = g.n_nodes
    a_mat = g.adjacency()
    at = a_mat.T.tocsr()
    hub = np.full(n, 1.0 / np.sqrt(n))
    auth = hub.copy()
    res_hub = res_auth = np.inf
    for it in range(max_iter):
        new_auth = _normalized(at @ hub)
        new_hub = _normalized(a_mat @ new_auth)
        res_hub = np.abs(new_hub - hub).sum()
        res_auth = np.abs(new_auth - auth).sum()
        hub, auth = new_hub, new_auth
        if max(res_hub, res_auth) < tol:
            logger.debug('hits converged after %d iterations', it + 1)
            return hub, auth
    if res_hub >= tol:
        raise ConvergenceError('hub', max_iter, res_hub)
    raise ConvergenceError('authority', max_iter, res_auth)


def eigenvector_centrality(g, tol=None, max_iter=None):
    """
    Dominant eigenvector of the undirected adjacency, L2-normalised. Iterates x <- (A + I) x so that bipartite
    structures such as stars do not oscillate.
    """
    tol = configs.centrality['tol'] if tol is None else tol
    max_iter = configs.centrality['max_iter'] if max_iter is None else max_iter
    _check_iteration(tol, max_iter)
    u = g.undirected()
    x = np.full(g.n_nodes, 1.0 / np.sqrt(g.n_nodes))
    residual = np.inf
    for it in range(max_iter):
        new = _normalized(u @ x + x)
        residual = np.abs(new - x).sum()
        x = new
        if residual < tol:
            logger.debug('eigenvector centrality converged after %d iterations', it + 1)
            return x
    raise ConvergenceError('eigenvector', max_iter, residual)


def compute_node_features(g):
    """
    Coreness, pagerank, hub score, authority score, eigenvector centrality and clustering coefficient of every node.
    Coreness and clustering use the undirected projection.
    :param g: Graph
    :returns NodeFeatures with an (n_nodes, 6) value matrix
    """
    if g.n_nodes == 0:
        raise GraphError('node features of an empty graph')
    und = g.to_networkx(directed=False)
    core = nx.core_number(und)
    clustering = nx.clustering(und)
    hub, auth = hits(g)
    values = np.column_stack([
        np.array([core[v] for v in range(g.n_nodes)], dtype=np.float64),
        pagerank(g),
        hub,
        auth,
        eigenvector_centrality(g),
        np.array([clustering[v] for v in range(g.n_nodes)], dtype=np.float64),
    ])
    logger.info('computed %d node features for %d nodes', values.shape[1], g.n_nodes)
    return NodeFeatures(values=values)


def random_walks(g, walks_per_node, walk_length, rng):
    """
    Truncated uniform random walks on the undirected projection, one round per walk with the start nodes shuffled
    :returns list of walks, each a list of node-index strings
    """
    u = g.undirected()
    indptr, indices = u.indptr, u.indices
    deg = np.diff(indptr)
    walks = []
    for _ in range(walks_per_node):
        cur = rng.permutation(g.n_nodes)
        steps = np.full((g.n_nodes, walk_length), -1, dtype=np.int64)
        steps[:, 0] = cur
        alive = np.ones(g.n_nodes, dtype=bool)
        for t in range(1, walk_length):
            draw = rng.random(g.n_nodes)
            alive &= deg[cur] > 0
            nxt = np.full(g.n_nodes, -1, dtype=np.int64)
            idx = np.flatnonzero(alive)
            nxt[idx] = indices[indptr[cur[idx]] + (draw[idx] * deg[cur[idx]]).astype(np.int64)]
            steps[:, t] = nxt
            cur = np.where(alive, nxt, cur)
        for row in steps:
            walks.append([str(v) for v in row[row >= 0]])
    return walks


def stable_hash(text):
    """process-independent replacement for hash(), used by gensim to seed word vectors"""
    return int.from_bytes(hashlib.md5(text.encode('utf-8')).digest()[:8], 'little')


def deepwalk_embeddings(g, dim=None, rng_seed=0, workers=1, **kwargs):
    """
    DeepWalk node embeddings: truncated random walks fed to skip-gram with negative sampling
    :param g: Graph
    :param dim: embedding dimension, default 32
    :param rng_seed: integer seed; results are reproducible when workers == 1
    :param workers: gensim worker threads
    :param kwargs: overrides for walks_per_node, walk_length, window, negative, epochs, alpha, min_alpha
    :returns NodeEmbeddings with an (n_nodes, dim) value matrix
    """
    settings = dict(configs.deepwalk)
    unknown = set(kwargs) - set(settings)
    if unknown:
        raise TypeError('unknown DeepWalk settings: {}'.format(', '.join(sorted(unknown))))
    settings.update({k: v for k, v in kwargs.items() if v is not None})
    dim = settings['dim'] if dim is None else dim
    if dim < 1:
        raise ValueError('dim must be >= 1')
    if g.n_nodes == 0:
        raise GraphError('embeddings of an empty graph')

    walks = random_walks(g, settings['walks_per_node'], settings['walk_length'], make_rng(rng_seed, 0))
    logger.info('training skip-gram on %d walks (dim %d)', len(walks), dim)
    model = Word2Vec(sentences=walks, vector_size=dim, window=settings['window'], min_count=0, sg=1, hs=0,
                     negative=settings['negative'], epochs=settings['epochs'], alpha=settings['alpha'],
                     min_alpha=settings['min_alpha'], seed=derive_seed(rng_seed, 1), workers=workers,
                     hashfxn=stable_hash)
    values = np.stack([model.wv[str(v)] for v in range(g.n_nodes)]).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise GraphError('non-finite embedding values')
    return NodeEmbeddings(values=values)


def build_r0(embeddings, features):
    """
    Initial influence representation: embeddings followed by z-score standardised structural features
    :param embeddings: NodeEmbeddings
    :param features: NodeFeatures
    :returns (n_nodes, dim + 6) array
    """
    emb = embeddings.values if isinstance(embeddings, NodeEmbeddings) else np.asarray(embeddings)
    feat = features.values if isinstance(features, NodeFeatures) else np.asarray(features)
    if emb.shape[0] != feat.shape[0]:
        raise ValueError('embeddings cover {} nodes, features {}'.format(emb.shape[0], feat.shape[0]))
    return np.hstack([emb, StandardScaler().fit_transform(feat)])
