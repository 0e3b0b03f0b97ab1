import matplotlib

matplotlib.use('Agg')

import numpy as np
import pytest

from coupledgnn.cascades import Cascade, Dataset
from coupledgnn.graph import Graph


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow benchmark tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running benchmark test')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


def make_graph(n, edges, node_ids=None):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return Graph.from_edges(n, edges[:, 0], edges[:, 1], node_ids=node_ids)


def make_cascade(cid, activations):
    """activations: list of (node, step); the step-0 nodes are the observed ones"""
    final = frozenset(v for v, _ in activations)
    observed = frozenset(v for v, t in activations if t == 0)
    return Cascade(id=cid, activations=tuple(activations), observed_active=observed, final_active=final)


def random_graph(rng, n, m):
    """directed graph on n nodes with up to m random edges and at least one in-edge per node"""
    src = list(rng.integers(0, n, size=m))
    dst = list(rng.integers(0, n, size=m))
    for v in range(n):
        src.append(int((v + 1 + rng.integers(0, n - 1)) % n))
        dst.append(v)
    return Graph.from_edges(n, src, dst)


def random_cascades(rng, g, count, observed_max=3):
    out = []
    for i in range(count):
        k = int(rng.integers(1, observed_max + 1))
        nodes = rng.permutation(g.n_nodes)
        observed = nodes[:k]
        later = nodes[k:k + int(rng.integers(0, g.n_nodes - k + 1))]
        acts = [(int(v), 0) for v in observed] + [(int(v), 2) for v in later]
        out.append(Cascade(id='r{}'.format(i), activations=tuple(acts), observed_active=frozenset(int(v) for v in observed),
                           final_active=frozenset(v for v, _ in acts)))
    return out


@pytest.fixture
def path_graph():
    """0 -> 1 -> 2 -> 3"""
    return make_graph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (2, 0)])


@pytest.fixture
def small_dataset():
    """twenty-node graph with a handful of cascades in every split"""
    rng = np.random.default_rng(3)
    g = random_graph(rng, 20, 40)
    items = random_cascades(rng, g, 12)
    split = {c.id: ('train' if i < 6 else 'val' if i < 9 else 'test') for i, c in enumerate(items)}
    return Dataset(graph=g, cascades=items, split=split)
