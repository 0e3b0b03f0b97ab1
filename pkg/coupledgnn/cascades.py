#! /usr/bin/env python

"""
Information cascades: Independent Cascade simulation with activation probability 1/d_v, an exact live-edge oracle for
small graphs, synthetic dataset generation with power-law seed sets, and ingestion of timestamped cascade records.
"""

import concurrent.futures
import dataclasses
import functools
import logging
import math

import numpy as np
import pandas as pd

from coupledgnn import configs
from coupledgnn.common import CascadeError, make_rng

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')


@dataclasses.dataclass(frozen=True, eq=False)
class Cascade:
    """
    One information item. activations holds (node, timestep) pairs; timesteps are simulation steps for synthetic
    cascades and seconds since the first activation for ingested ones.
    """
    id: str
    activations: tuple
    observed_active: frozenset
    final_active: frozenset

    def __post_init__(self):
        nodes = [v for v, _ in self.activations]
        if len(nodes) != len(set(nodes)):
            raise CascadeError('cascade {}: a node is activated twice'.format(self.id))
        if any(t < 0 for _, t in self.activations):
            raise CascadeError('cascade {}: negative timestep'.format(self.id))
        if not self.observed_active:
            raise CascadeError('cascade {}: no observed activations'.format(self.id))
        if not self.seeds <= self.observed_active:
            raise CascadeError('cascade {}: seeds missing from the observed set'.format(self.id))
        if not self.observed_active <= self.final_active:
            raise CascadeError('cascade {}: observed users missing from the final set'.format(self.id))

    @functools.cached_property
    def seeds(self):
        return frozenset(v for v, t in self.activations if t == 0)

    @property
    def final_size(self):
        return len(self.final_active)

    @property
    def observed_size(self):
        return len(self.observed_active)

    @functools.cached_property
    def observed_index(self):
        return np.array(sorted(self.observed_active), dtype=np.int64)

    @functools.cached_property
    def final_index(self):
        return np.array(sorted(self.final_active), dtype=np.int64)


@dataclasses.dataclass(eq=False)
class Dataset:
    graph: object
    cascades: list
    split: dict

    def __post_init__(self):
        ids = [c.id for c in self.cascades]
        if len(ids) != len(set(ids)):
            raise CascadeError('duplicate cascade ids')
        if set(self.split) != set(ids):
            raise CascadeError('split does not cover exactly the cascades of the dataset')
        bad = set(self.split.values()) - set(SPLITS)
        if bad:
            raise CascadeError('unknown split names: {}'.format(', '.join(sorted(bad))))

    def subset(self, name):
        return [c for c in self.cascades if self.split[c.id] == name]

    def summary(self):
        """
        Counts per split and the distribution of observed and final sizes
        :returns pandas DataFrame indexed by split name
        """
        rows = []
        for name in SPLITS:
            items = self.subset(name)
            observed = np.array([c.observed_size for c in items], dtype=np.float64)
            final = np.array([c.final_size for c in items], dtype=np.float64)
            rows.append(dict(split=name, n=len(items),
                             observed_mean=observed.mean() if items else np.nan,
                             final_mean=final.mean() if items else np.nan,
                             final_median=np.median(final) if items else np.nan,
                             final_max=final.max() if items else np.nan))
        return pd.DataFrame(rows).set_index('split')


def sample_seed_sizes(exponent, max_size, n, rng):
    """
    Draw seed-set sizes with P(k) proportional to k^-exponent on {1, ..., max_size}
    """
    if exponent <= 1:
        raise ValueError('exponent must be > 1')
    if max_size < 1:
        raise ValueError('max_size must be >= 1')
    sizes = np.arange(1, max_size + 1)
    pmf = sizes.astype(np.float64) ** -exponent
    pmf /= pmf.sum()
    return rng.choice(sizes, size=n, p=pmf)


def sample_seed_set(g, exponent, max_size, rng_seed):
    """
    Power-law sized seed set with members drawn uniformly without replacement
    :param g: Graph
    :param exponent: power-law exponent, > 1
    :param max_size: largest seed-set size, in [1, n_nodes]
    :param rng_seed: integer seed or numpy Generator
    :returns sorted array of node indices
    """
    if not 1 <= max_size <= g.n_nodes:
        raise ValueError('max_size must lie in [1, {}]'.format(g.n_nodes))
    rng = make_rng(rng_seed)
    size = int(sample_seed_sizes(exponent, max_size, 1, rng)[0])
    return np.sort(rng.choice(g.n_nodes, size=size, replace=False))


def _check_seeds(g, seeds):
    seeds = np.unique(np.asarray(list(seeds), dtype=np.int64))
    if seeds.size == 0:
        raise CascadeError('seed set is empty')
    if seeds.min() < 0 or seeds.max() >= g.n_nodes:
        raise CascadeError('seed node outside the graph')
    return seeds


def simulate_ic(g, seeds, t_observe, rng_seed, cascade_id='0'):
    """
    Discrete-step Independent Cascade run to exhaustion. A node activated at step t tries once, at step t + 1, to
    activate each inactive out-neighbour v, succeeding with probability 1/d_v where d_v is the in-degree of v.
    :param g: Graph
    :param seeds: nodes active at step 0
    :param t_observe: number of observed steps; activations at steps < t_observe are observed
    :param rng_seed: integer seed or numpy Generator
    :param cascade_id: identifier stored on the cascade
    :returns Cascade
    """
    if t_observe < 1:
        raise ValueError('t_observe must be >= 1')
    seeds = _check_seeds(g, seeds)
    rng = make_rng(rng_seed)
    in_deg = g.in_degree()
    active = np.zeros(g.n_nodes, dtype=bool)
    active[seeds] = True
    activations = [(int(v), 0) for v in seeds]
    frontier = seeds
    step = 0
    while frontier.size:
        step += 1
        _, targets = g.out_edges_of(frontier)
        targets = targets[~active[targets]]
        if not targets.size:
            break
        hit = rng.random(targets.size) * in_deg[targets] < 1.0
        frontier = np.unique(targets[hit])
        active[frontier] = True
        activations.extend((int(v), step) for v in frontier)

    observed = frozenset(v for v, t in activations if t < t_observe)
    return Cascade(id=str(cascade_id), activations=tuple(activations), observed_active=observed,
                   final_active=frozenset(v for v, _ in activations))


def monte_carlo_spread(g, seeds, n_runs, rng_seed, chunk=None):
    """
    Mean and standard error of the final Independent Cascade size over many independent runs, simulated in
    vectorised batches of runs
    :param g: Graph
    :param seeds: nodes active at step 0
    :param n_runs: number of runs
    :param rng_seed: integer seed or numpy Generator
    :param chunk: runs per batch, default sized to keep batches near 16M edge draws
    :returns (mean, standard error)
    """
    seeds = _check_seeds(g, seeds)
    rng = make_rng(rng_seed)
    src, dst = g.src, g.dst
    prob = 1.0 / np.maximum(g.in_degree()[dst], 1)
    chunk = max(1, (1 << 24) // max(g.n_edges, 1)) if chunk is None else chunk
    if chunk < 1 or n_runs < 1:
        raise ValueError('n_runs and chunk must be >= 1')
    sizes = []
    for start in range(0, n_runs, chunk):
        r = min(chunk, n_runs - start)
        active = np.zeros((r, g.n_nodes), dtype=bool)
        active[:, seeds] = True
        frontier = active.copy()
        while frontier.any():
            attempt = frontier[:, src] & ~active[:, dst]
            success = attempt & (rng.random(attempt.shape) < prob)
            newly = np.zeros_like(active)
            rows, cols = np.nonzero(success)
            newly[rows, dst[cols]] = True
            newly &= ~active
            active |= newly
            frontier = newly
        sizes.append(active.sum(axis=1))
    sizes = np.concatenate(sizes).astype(np.float64)
    se = sizes.std(ddof=1) / math.sqrt(n_runs) if n_runs > 1 else float('nan')
    return float(sizes.mean()), float(se)


def exact_expected_spread(g, seeds, chunk=1 << 16):
    """
    Exact expected final size of the Independent Cascade with probabilities 1/d_v, by enumerating every live-edge
    world and the nodes reachable from the seeds in it
    :param g: Graph with at most 20 edges
    :param seeds: nodes active at step 0
    :returns expected number of active nodes
    """
    limit = configs.cascades['max_exact_edges']
    if g.n_edges > limit:
        raise CascadeError('exact enumeration needs at most {} edges, graph has {}'.format(limit, g.n_edges))
    seeds = _check_seeds(g, seeds)
    src, dst = g.src, g.dst
    in_deg = g.in_degree()
    if np.any(in_deg[dst] == 0):
        raise CascadeError('edge target without in-edges')
    prob = 1.0 / in_deg[dst]
    m = g.n_edges
    total = 0.0
    for start in range(0, 1 << m, chunk):
        worlds = np.arange(start, min(start + chunk, 1 << m), dtype=np.int64)
        live = ((worlds[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
        weight = np.prod(np.where(live, prob, 1.0 - prob), axis=1)
        reach = np.zeros((worlds.size, g.n_nodes), dtype=bool)
        reach[:, seeds] = True
        changed = True
        while changed:
            changed = False
            for e in range(m):
                spread = reach[:, src[e]] & live[:, e] & ~reach[:, dst[e]]
                if spread.any():
                    reach[:, dst[e]] |= spread
                    changed = True
        total += float(np.dot(weight, reach.sum(axis=1)))
    return total


def assign_splits(ids, fractions, rng_seed):
    """
    Random partition of cascade ids into train/val/test by the given fractions
    :returns dict of cascade id to split name
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise CascadeError('split fractions must be three nonnegative numbers summing to 1, got {}'.format(fractions))
    ids = list(ids)
    n = len(ids)
    order = make_rng(rng_seed).permutation(n)
    n_train = min(n, int(round(fractions[0] * n)))
    n_val = min(n - n_train, int(round(fractions[1] * n)))
    split = dict()
    for rank, i in enumerate(order):
        if rank < n_train:
            split[ids[i]] = 'train'
        elif rank < n_train + n_val:
            split[ids[i]] = 'val'
        else:
            split[ids[i]] = 'test'
    return split


def _simulate_range(g, indices, rng_seed, exponent, max_size, t_observe):
    out = []
    for i in indices:
        rng = make_rng(rng_seed, 0, i)
        seeds = sample_seed_set(g, exponent, max_size, rng)
        out.append(simulate_ic(g, seeds, t_observe, rng, cascade_id='c{:06d}'.format(i)))
    return out


def generate_dataset(g, n_cascades, min_active, split, rng_seed, t_observe=None, exponent=None, max_seed_size=None,
                     filter_on=None, threads=1):
    """
    Simulate cascades from power-law seed sets, drop the small ones and split the survivors. Cascade i draws from its
    own random stream derived from (rng_seed, i), so the result does not depend on threads.
    :param g: Graph
    :param n_cascades: number of cascades to simulate
    :param min_active: smallest size kept
    :param split: (train, val, test) fractions
    :param rng_seed: integer seed
    :param t_observe: observed steps, default 2
    :param exponent: seed-size power-law exponent, default 2.5
    :param max_seed_size: largest seed set, default min(100, n_nodes)
    :param filter_on: 'final' or 'observed', which size min_active applies to, default 'final'
    :param threads: worker processes for simulation
    :returns Dataset
    """
    if n_cascades < 1:
        raise ValueError('n_cascades must be >= 1')
    if min_active < 1:
        raise ValueError('min_active must be >= 1')
    t_observe = configs.cascades['t_observe'] if t_observe is None else t_observe
    exponent = configs.cascades['exponent'] if exponent is None else exponent
    max_seed_size = min(configs.cascades['max_seed_size'], g.n_nodes) if max_seed_size is None else max_seed_size
    filter_on = configs.cascades['filter_on'] if filter_on is None else filter_on
    if t_observe < 1:
        raise ValueError('t_observe must be >= 1')
    if exponent <= 1:
        raise ValueError('exponent must be > 1')
    if not 1 <= max_seed_size <= g.n_nodes:
        raise ValueError('max_seed_size must lie in [1, {}]'.format(g.n_nodes))
    if filter_on not in ('final', 'observed'):
        raise ValueError("filter_on must be 'final' or 'observed'")

    indices = list(range(n_cascades))
    if threads > 1:
        parts = np.array_split(indices, threads * 4)
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_simulate_range, g, part.tolist(), rng_seed, exponent, max_seed_size, t_observe)
                       for part in parts]
            generated = [c for f in futures for c in f.result()]
    else:
        generated = _simulate_range(g, indices, rng_seed, exponent, max_seed_size, t_observe)

    size = (lambda c: c.final_size) if filter_on == 'final' else (lambda c: c.observed_size)
    survivors = [c for c in generated if size(c) >= min_active]
    logger.info('generated %d cascades, %d with %s size >= %d', len(generated), len(survivors), filter_on,
                min_active)
    if not survivors:
        raise CascadeError('no cascade reached {} active users'.format(min_active))
    splits = assign_splits([c.id for c in survivors], split, make_rng(rng_seed, 1))
    return Dataset(graph=g, cascades=survivors, split=splits)


def cascades_from_records(records, g, window=None, min_active=1):
    """
    Build cascades from timestamped records such as real retweet logs
    :param records: iterable of dicts with 'id', 'activations' ([[node_id, time], ...]) and optionally 'observed'
        and 'final' (lists of node ids)
    :param g: Graph whose external node ids the records use
    :param window: observation window in the units of the timestamps; when given, observed users are those activated
        less than window after the first activation, otherwise the record's 'observed' list is used
    :param min_active: smallest final size kept
    :returns list of Cascade
    """
    index = g.index_of()
    out = []
    unknown = 0
    for rec in records:
        first = dict()
        for node_id, t in rec['activations']:
            v = index.get(str(node_id))
            if v is None:
                unknown += 1
                continue
            t = float(t)
            if v not in first or t < first[v]:
                first[v] = t
        if not first:
            continue
        t0 = min(first.values())
        activations = tuple(sorted(((v, t - t0) for v, t in first.items()), key=lambda a: (a[1], a[0])))
        if window is not None:
            observed = {v for v, t in activations if t < window}
        else:
            observed = {index[str(n)] for n in rec.get('observed', []) if str(n) in index}
            observed |= {v for v, t in activations if t == 0}
        if 'final' in rec:
            final = {index[str(n)] for n in rec['final'] if str(n) in index}
        else:
            final = set(first)
        final |= observed
        if len(final) < min_active:
            continue
        out.append(Cascade(id=str(rec['id']), activations=activations, observed_active=frozenset(observed),
                           final_active=frozenset(final)))
    if unknown:
        logger.warning('ignored %d activations of users outside the graph', unknown)
    logger.info('built %d cascades from records', len(out))
    return out
