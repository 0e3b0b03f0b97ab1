#! /usr/bin/env python

"""
Directed influence graphs in compressed adjacency form, stochastic Kronecker generation, largest connected component,
connectivity-preserving edge dropout and hop distances between node sets.

Edges point in the direction of influence: u -> v means u can influence v (v follows u), so the neighbourhood used by
the model for node v is its set of in-neighbours.
"""

import collections
import dataclasses
import functools
import logging
import math

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from coupledgnn import configs
from coupledgnn.common import EdgeDropoutError, GraphError, make_rng

logger = logging.getLogger(__name__)


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class Graph:
    """
    Immutable directed graph. out_indptr/out_indices index u -> v by source, in_indptr/in_indices index the same edge
    set by target. Neighbour lists are sorted and node indices are dense in [0, n_nodes).
    """
    n_nodes: int
    out_indptr: np.ndarray
    out_indices: np.ndarray
    in_indptr: np.ndarray
    in_indices: np.ndarray
    node_ids: tuple

    @classmethod
    def from_edges(cls, n_nodes, src, dst, node_ids=None):
        """
        Build a graph from parallel source/target index arrays. Self-loops and duplicate edges are dropped.
        :param n_nodes: number of nodes
        :param src: source index per edge
        :param dst: target index per edge
        :param node_ids: optional external string identifier per node, defaults to the index as a string
        :returns Graph
        """
        n_nodes = int(n_nodes)
        if n_nodes < 0:
            raise GraphError('negative node count')
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise GraphError('source and target arrays differ in length')
        if src.size and (src.min() < 0 or dst.min() < 0 or src.max() >= n_nodes or dst.max() >= n_nodes):
            raise GraphError('edge endpoint outside [0, {})'.format(n_nodes))
        if node_ids is None:
            node_ids = tuple(str(i) for i in range(n_nodes))
        else:
            node_ids = tuple(str(i) for i in node_ids)
            if len(node_ids) != n_nodes:
                raise GraphError('{} node ids given for {} nodes'.format(len(node_ids), n_nodes))
            if len(set(node_ids)) != n_nodes:
                raise GraphError('node ids are not unique')

        loops = src == dst
        if loops.any():
            logger.warning('dropping %d self-loops', int(loops.sum()))
            src, dst = src[~loops], dst[~loops]
        key = np.unique(src * max(n_nodes, 1) + dst)
        if key.size != src.size:
            logger.warning('dropping %d duplicate edges', int(src.size - key.size))
        src = key // max(n_nodes, 1)
        dst = key % max(n_nodes, 1)

        out_indptr = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n_nodes), out=out_indptr[1:])
        order = np.lexsort((src, dst))
        in_indptr = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=n_nodes), out=in_indptr[1:])
        return cls(n_nodes=n_nodes,
                   out_indptr=_frozen(out_indptr, np.int64),
                   out_indices=_frozen(dst, np.int64),
                   in_indptr=_frozen(in_indptr, np.int64),
                   in_indices=_frozen(src[order], np.int64),
                   node_ids=node_ids)

    @property
    def n_edges(self):
        return int(self.out_indices.size)

    @property
    def src(self):
        """source of every edge, edges ordered by (source, target)"""
        return np.repeat(np.arange(self.n_nodes, dtype=np.int64), np.diff(self.out_indptr))

    @property
    def dst(self):
        return self.out_indices

    def edges(self):
        return np.column_stack([self.src, self.dst])

    def out_neighbors(self, u):
        return self.out_indices[self.out_indptr[u]:self.out_indptr[u + 1]]

    def in_neighbors(self, v):
        return self.in_indices[self.in_indptr[v]:self.in_indptr[v + 1]]

    def in_degree(self):
        return np.diff(self.in_indptr)

    def out_degree(self):
        return np.diff(self.out_indptr)

    def index_of(self):
        """mapping from external id to node index"""
        return {nid: i for i, nid in enumerate(self.node_ids)}

    @functools.cached_property
    def _adjacency(self):
        data = np.ones(self.n_edges, dtype=np.float64)
        return sp.csr_matrix((data, self.out_indices, self.out_indptr), shape=(self.n_nodes, self.n_nodes))

    def adjacency(self):
        """sparse n x n matrix with A[u, v] = 1 for every edge u -> v; shared, do not modify"""
        return self._adjacency

    def out_edges_of(self, nodes):
        """
        Targets of every out-edge of the given nodes, concatenated in node order
        :returns (sources, targets) arrays of equal length
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        starts = self.out_indptr[nodes]
        lengths = self.out_indptr[nodes + 1] - starts
        total = int(lengths.sum())
        offsets = np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        return np.repeat(nodes, lengths), self.out_indices[np.repeat(starts, lengths) + offsets]

    def undirected(self):
        """binary symmetric adjacency of the undirected projection"""
        a = self.adjacency()
        u = ((a + a.T) > 0).astype(np.float64)
        return sp.csr_matrix(u)

    def to_networkx(self, directed=True):
        g = nx.DiGraph() if directed else nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        g.add_edges_from(zip(self.src.tolist(), self.dst.tolist()))
        return g

    def induced_subgraph(self, nodes):
        """
        Subgraph on a node subset, with indices re-densified in increasing order of the old index
        :param nodes: iterable of node indices to keep
        :returns (Graph, old_to_new) where old_to_new[i] is the new index of old node i or -1
        """
        keep = np.zeros(self.n_nodes, dtype=bool)
        keep[np.asarray(list(nodes), dtype=np.int64)] = True
        old_to_new = np.full(self.n_nodes, -1, dtype=np.int64)
        old_to_new[keep] = np.arange(int(keep.sum()))
        src, dst = self.src, self.dst
        mask = keep[src] & keep[dst]
        ids = tuple(nid for nid, k in zip(self.node_ids, keep) if k)
        sub = Graph.from_edges(int(keep.sum()), old_to_new[src[mask]], old_to_new[dst[mask]], node_ids=ids)
        return sub, old_to_new


@dataclasses.dataclass(frozen=True)
class KroneckerConfig:
    seed_matrix: tuple = tuple(tuple(row) for row in configs.kronecker['seed_matrix'])
    iterations: int = configs.kronecker['iterations']
    rng_seed: int = 0

    def __post_init__(self):
        m = np.asarray(self.seed_matrix, dtype=np.float64)
        if m.shape != (2, 2):
            raise GraphError('Kronecker seed matrix must be 2x2, got shape {}'.format(m.shape))
        if np.any(m < 0) or np.any(m > 1) or not np.all(np.isfinite(m)):
            raise GraphError('Kronecker seed matrix entries must lie in [0, 1]')
        object.__setattr__(self, 'seed_matrix', tuple(tuple(float(x) for x in row) for row in m))


def expected_kronecker_edges(cfg):
    """
    Expected edge count of the sampled graph: the sum of all Kronecker-power probabilities less the diagonal
    """
    m = np.asarray(cfg.seed_matrix)
    return float(m.sum() ** cfg.iterations - np.trace(m) ** cfg.iterations)


def generate_kronecker(cfg):
    """
    Sample a stochastic Kronecker graph on 2^iterations nodes. Each ordered pair (u, v) becomes an edge independently
    with probability prod_b seed[u_b][v_b] over the bit positions b of u and v; self-loops are discarded.
    :param cfg: KroneckerConfig
    :returns Graph
    """
    if cfg.iterations < 1:
        raise ValueError('iterations must be >= 1')
    if cfg.iterations > configs.kronecker['max_iterations']:
        raise GraphError('iterations={} exceeds the limit of {}'.format(cfg.iterations,
                                                                      configs.kronecker['max_iterations']))
    seed = np.asarray(cfg.seed_matrix, dtype=np.float64)
    n = 2 ** cfg.iterations
    bits = (np.arange(n)[:, None] >> np.arange(cfg.iterations)[None, :]) & 1
    rng = make_rng(cfg.rng_seed)

    block = max(1, (1 << 22) // n)
    rows, cols = [], []
    for start in range(0, n, block):
        ub = bits[start:start + block]
        prob = np.ones((ub.shape[0], n))
        for b in range(cfg.iterations):
            prob *= seed[ub[:, b][:, None], bits[:, b][None, :]]
        hit = rng.random(prob.shape) < prob
        r, c = np.nonzero(hit)
        rows.append(r + start)
        cols.append(c)
    src = np.concatenate(rows)
    dst = np.concatenate(cols)
    keep = src != dst
    g = Graph.from_edges(n, src[keep], dst[keep])
    logger.info('Kronecker graph: %d nodes, %d edges (expected %.1f)', g.n_nodes, g.n_edges,
                expected_kronecker_edges(cfg))
    return g


def largest_connected_component(g):
    """
    Induced subgraph on the largest weakly connected component. Ties go to the component holding the smallest index.
    :param g: Graph
    :returns (Graph, old_to_new) with old_to_new[i] = new index of node i, or -1 if dropped
    """
    if g.n_nodes == 0:
        raise GraphError('largest connected component of an empty graph')
    n_comp, labels = csgraph.connected_components(g.adjacency(), directed=True, connection='weak')
    sizes = np.bincount(labels, minlength=n_comp)
    best = np.flatnonzero(sizes == sizes.max())
    first_member = np.array([np.flatnonzero(labels == c)[0] for c in best])
    label = best[np.argmin(first_member)]
    nodes = np.flatnonzero(labels == label)
    sub, old_to_new = g.induced_subgraph(nodes)
    logger.info('largest connected component: %d of %d nodes, %d edges', sub.n_nodes, g.n_nodes, sub.n_edges)
    return sub, old_to_new


def is_connected_undirected(g):
    if g.n_nodes == 0:
        return False
    n_comp, _ = csgraph.connected_components(g.undirected(), directed=False)
    return n_comp == 1


def drop_edges_connected(g, fraction, rng_seed, attempts_per_edge=None):
    """
    Remove floor(fraction * |E|) uniformly chosen edges, rejecting any removal that would disconnect the two endpoints
    in the undirected projection.
    :param g: Graph
    :param fraction: share of edges to remove, in [0, 1)
    :param rng_seed: integer seed
    :param attempts_per_edge: rejected attempts allowed per edge of g before giving up, default 50
    :returns Graph with the same nodes and fewer edges
    """
    if not 0 <= fraction < 1:
        raise ValueError('fraction must lie in [0, 1), got {}'.format(fraction))
    if attempts_per_edge is None:
        attempts_per_edge = configs.experiments['dropout_attempts_per_edge']
    if attempts_per_edge < 1:
        raise ValueError('attempts_per_edge must be >= 1')
    m = g.n_edges
    target = int(math.floor(fraction * m))
    if target == 0:
        return g

    rng = make_rng(rng_seed)
    src, dst = g.src, g.dst
    und = g.to_networkx(directed=False)
    multiplicity = collections.Counter((min(u, v), max(u, v)) for u, v in zip(src.tolist(), dst.tolist()))
    pool = list(range(m))
    alive = np.ones(m, dtype=bool)
    max_rejections = m * attempts_per_edge
    removed = 0
    rejected = 0
    while removed < target:
        if rejected >= max_rejections:
            raise EdgeDropoutError(removed, m, target)
        i = int(rng.integers(len(pool)))
        e = pool[i]
        u, v = int(src[e]), int(dst[e])
        key = (min(u, v), max(u, v))
        if multiplicity[key] == 1:
            und.remove_edge(u, v)
            if not nx.has_path(und, u, v):
                und.add_edge(u, v)
                rejected += 1
                continue
        multiplicity[key] -= 1
        pool[i] = pool[-1]
        pool.pop()
        alive[e] = False
        removed += 1
    logger.info('dropped %d of %d edges (%d rejected draws)', removed, m, rejected)
    return Graph.from_edges(g.n_nodes, src[alive], dst[alive], node_ids=g.node_ids)


def hop_distance_distribution(g, sources, targets):
    """
    Histogram of the shortest hop distance, along edge direction, from a source set to each target
    :param g: Graph
    :param sources: node indices the search starts from
    :param targets: node indices to measure
    :returns dict of hop count to number of targets, with math.inf for unreachable targets
    """
    sources = np.unique(np.asarray(list(sources), dtype=np.int64))
    if sources.size == 0:
        raise ValueError('sources must be nonempty')
    targets = np.asarray(list(targets), dtype=np.int64)
    adj = g.adjacency()
    dist = np.full(g.n_nodes, -1, dtype=np.int64)
    dist[sources] = 0
    frontier = sources
    hop = 0
    while frontier.size:
        hop += 1
        nxt = np.unique(adj[frontier].indices)
        nxt = nxt[dist[nxt] < 0]
        dist[nxt] = hop
        frontier = nxt
    hist = collections.Counter(math.inf if d < 0 else int(d) for d in dist[targets].tolist())
    return dict(sorted(hist.items()))


def coverage_within(histogram, max_hops):
    """
    Share of the targets in a hop histogram that lie within max_hops
    """
    total = sum(histogram.values())
    if total == 0:
        return float('nan')
    return sum(c for h, c in histogram.items() if h <= max_hops) / total
