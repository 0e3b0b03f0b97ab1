#! /usr/bin/env python

"""
Command-line front end: graph generation, node features and embeddings, cascade simulation and ingestion, training,
hyperparameter search, evaluation, the feature-based baseline and the experiments.

Exit codes: 0 on success, 1 on usage errors and missing inputs, 2 on runtime errors.
"""

import argparse
import collections
import contextlib
import dataclasses
import logging
import math
import os
import sys
import time

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from coupledgnn import baseline
from coupledgnn import cascades
from coupledgnn import configs
from coupledgnn import features
from coupledgnn import fileio
from coupledgnn import graph
from coupledgnn import metrics
from coupledgnn import model
from coupledgnn import plotting
from coupledgnn import train
from coupledgnn.common import CoupledGNNError, TrainingDiverged, derive_seed, git_blob_hash, setup_logging

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '{}: error: {}\n'.format(self.prog, message))


def _float_list(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated numbers, got {!r}'.format(text))


def _int_list(text):
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma-separated integers, got {!r}'.format(text))


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict
    outputs: list
    wall_time: float

    def write(self, path):
        fileio.write_json(path, dataclasses.asdict(self))


def _data_args(p, r0=True):
    p.add_argument('--graph', required=True, help='edge-list file (its .ids sidecar is used when present)')
    p.add_argument('--cascades', required=True, help='cascade JSON-lines file')
    p.add_argument('--splits', required=True, help='split file, cascade_id<TAB>train|val|test')
    if r0:
        p.add_argument('--features', required=True, help='node feature matrix from featurize')
        p.add_argument('--embeddings', required=True, help='node embedding matrix from embed')


def _train_args(p):
    p.add_argument('--config', help='key = value file of training settings; flags override it')
    p.add_argument('--lr-self-activation', type=float, help='learning rate of the self-activation vector')
    p.add_argument('--lr-other', type=float, help='learning rate of every other parameter')
    p.add_argument('--l2', type=float, dest='l2_coeff', help='L2 coefficient')
    p.add_argument('--lam', type=float, help='weight of the user-level cross entropy')
    p.add_argument('--K', type=int, help='number of layers')
    p.add_argument('--share-w', action='store_true', default=None, help='share one transform between both networks')
    p.add_argument('--batch-size', type=int)
    p.add_argument('--max-epochs', type=int)
    p.add_argument('--patience', type=int)


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None, help='seed of every random choice (default 0)')
    common.add_argument('--deterministic', action='store_true', help='single-threaded, reproducible execution')
    common.add_argument('--threads', type=int, default=1, help='worker processes where supported')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    common.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    common.add_argument('--manifest', help='write a run manifest JSON here')

    parser = ArgumentParser(prog='coupled-gnn', description='Popularity prediction with coupled graph neural networks')
    sub = parser.add_subparsers(dest='command', metavar='command', parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser('gen-graph', parents=[common], help='sample a stochastic Kronecker graph')
    p.add_argument('--seed-matrix', type=_float_list, default=[0.9, 0.5, 0.5, 0.1], help='2x2 seed, row-major')
    p.add_argument('--iters', type=int, default=configs.kronecker['iterations'])
    p.add_argument('--no-lcc', action='store_true', help='keep every node instead of the largest component')
    p.add_argument('--out', required=True, help='edge-list output; the id map goes next to it')
    p.add_argument('--plot-dir')
    p.set_defaults(func=run_gen_graph, inputs=())

    p = sub.add_parser('featurize', parents=[common], help='structural node features')
    p.add_argument('--graph', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=run_featurize, inputs=('graph',))

    p = sub.add_parser('embed', parents=[common], help='DeepWalk node embeddings')
    p.add_argument('--graph', required=True)
    p.add_argument('--dim', type=int, default=configs.deepwalk['dim'])
    p.add_argument('--walks-per-node', type=int)
    p.add_argument('--walk-length', type=int)
    p.add_argument('--window', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=run_embed, inputs=('graph',))

    p = sub.add_parser('gen-cascades', parents=[common], help='simulate Independent Cascade datasets')
    p.add_argument('--graph', required=True)
    p.add_argument('--n', type=int, default=configs.cascades['n_cascades'], help='cascades to simulate')
    p.add_argument('--min-active', type=int, default=configs.cascades['min_active'])
    p.add_argument('--t-observe', type=int, default=configs.cascades['t_observe'])
    p.add_argument('--filter-on', choices=('final', 'observed'), default=configs.cascades['filter_on'])
    p.add_argument('--exponent', type=float, default=configs.cascades['exponent'])
    p.add_argument('--max-seed-size', type=int)
    p.add_argument('--split', type=_float_list, default=list(configs.cascades['split']))
    p.add_argument('--out', required=True)
    p.add_argument('--split-out', required=True)
    p.set_defaults(func=run_gen_cascades, inputs=('graph',))

    p = sub.add_parser('ingest', parents=[common], help='build a dataset from timestamped cascade logs')
    p.add_argument('--graph', required=True)
    p.add_argument('--input', required=True, help='cascade JSON lines with [node_id, time] activations')
    p.add_argument('--window', type=float, help='observation window in seconds, e.g. 3600, 7200 or 10800')
    p.add_argument('--min-active', type=int, default=configs.cascades['ingest_min_active'])
    p.add_argument('--split', type=_float_list, default=list(configs.cascades['split']))
    p.add_argument('--out', required=True)
    p.add_argument('--split-out', required=True)
    p.set_defaults(func=run_ingest, inputs=('graph', 'input'))

    p = sub.add_parser('train', parents=[common], help='train the coupled model')
    _data_args(p)
    _train_args(p)
    p.add_argument('--out', required=True, help='checkpoint output')
    p.add_argument('--log', help='training log JSON lines')
    p.add_argument('--pred-out', help='test predictions JSON lines')
    p.add_argument('--report-out', help='test metrics JSON')
    p.add_argument('--plot-dir')
    p.set_defaults(func=run_train, inputs=('graph', 'cascades', 'splits', 'features', 'embeddings', 'config'))

    p = sub.add_parser('grid', parents=[common], help='hyperparameter grid search')
    _data_args(p)
    _train_args(p)
    p.add_argument('--grid-K', type=_int_list, default=configs.grids['K'])
    p.add_argument('--grid-lr-self-activation', type=_float_list, default=configs.grids['lr_self_activation'])
    p.add_argument('--grid-lr-other', type=_float_list, default=configs.grids['lr_other'])
    p.add_argument('--grid-l2', type=_float_list, default=configs.grids['l2_coeff'])
    p.add_argument('--grid-lam', type=_float_list, default=configs.grids['lam'])
    p.add_argument('--out', required=True, help='table of validation MRSE per configuration')
    p.add_argument('--best-config', help='write the winning configuration as a key = value file')
    p.set_defaults(func=run_grid, inputs=('graph', 'cascades', 'splits', 'features', 'embeddings', 'config'))

    p = sub.add_parser('eval', parents=[common], help='score predictions or a checkpoint')
    p.add_argument('--pred', help='prediction JSON lines to score')
    p.add_argument('--truth', help='cascade JSON lines holding the true final sets')
    p.add_argument('--checkpoint', help='checkpoint to run instead of --pred')
    p.add_argument('--graph')
    p.add_argument('--cascades')
    p.add_argument('--splits')
    p.add_argument('--features')
    p.add_argument('--embeddings')
    p.add_argument('--split', choices=cascades.SPLITS, default='test')
    p.add_argument('--epsilon', type=float, default=configs.metrics['epsilon'])
    p.add_argument('--out', help='metrics JSON output')
    p.add_argument('--pred-out', help='predictions written when running a checkpoint')
    p.add_argument('--plot-dir')
    p.set_defaults(func=run_eval, inputs=('pred', 'truth', 'checkpoint', 'graph', 'cascades', 'splits', 'features',
                                          'embeddings'))

    p = sub.add_parser('baseline', parents=[common], help='feature-based linear baseline')
    _data_args(p, r0=False)
    p.add_argument('--lr-sparse', type=_float_list, default=[configs.baseline['lr_sparse']])
    p.add_argument('--lr-dense', type=_float_list, default=[configs.baseline['lr_dense']])
    p.add_argument('--l2', type=_float_list, default=[configs.baseline['l2']])
    p.add_argument('--max-epochs', type=int, default=configs.baseline['max_epochs'])
    p.add_argument('--features-out', help='feature matrix CSV')
    p.add_argument('--pred-out', help='test predictions JSON lines')
    p.add_argument('--out', required=True, help='test metrics JSON')
    p.set_defaults(func=run_baseline, inputs=('graph', 'cascades', 'splits'))

    exp = sub.add_parser('experiment', help='lambda sweep, edge dropout and hop distances')
    esub = exp.add_subparsers(dest='experiment', metavar='experiment', parser_class=ArgumentParser)
    esub.required = True

    p = esub.add_parser('lambda-sweep', parents=[common], help='validation and test MRSE per lambda')
    _data_args(p)
    _train_args(p)
    p.add_argument('--lams', type=_float_list, default=configs.experiments['lambda_sweep'])
    p.add_argument('--out', required=True)
    p.add_argument('--plot-dir')
    p.set_defaults(func=run_lambda_sweep, inputs=('graph', 'cascades', 'splits', 'features', 'embeddings', 'config'))

    p = esub.add_parser('edge-dropout', parents=[common], help='test MRSE with edges removed from the graph')
    _data_args(p)
    _train_args(p)
    p.add_argument('--fractions', type=_float_list, default=configs.experiments['dropout_fractions'])
    p.add_argument('--reuse-r0', action='store_true', help='keep the given features and embeddings for every graph')
    p.add_argument('--out', required=True)
    p.add_argument('--plot-dir')
    p.set_defaults(func=run_edge_dropout, inputs=('graph', 'cascades', 'splits', 'features', 'embeddings', 'config'))

    p = esub.add_parser('hop-dist', parents=[common], help='hop distance of later adopters from early adopters')
    p.add_argument('--graph', required=True)
    p.add_argument('--cascades', required=True)
    p.add_argument('--threshold', type=int, default=configs.experiments['hop_threshold'])
    p.add_argument('--out', required=True)
    p.add_argument('--plot-dir')
    p.set_defaults(func=run_hop_dist, inputs=('graph', 'cascades'))
    return parser


def _seed(args):
    return 0 if args.seed is None else args.seed


def _threads(args):
    return 1 if args.deterministic else max(1, args.threads)


def _load_r0(args, g):
    emb = fileio.read_matrix(args.embeddings)
    feat = fileio.read_matrix(args.features)
    if emb.shape[0] != g.n_nodes or feat.shape[0] != g.n_nodes:
        raise CoupledGNNError('features cover {} and embeddings {} users, graph has {}'.format(
            feat.shape[0], emb.shape[0], g.n_nodes))
    return features.build_r0(emb, feat)


def _train_config(args):
    values = dict()
    if getattr(args, 'config', None):
        values.update(configs.read_config_file(args.config, train.TrainConfig))
    for f in dataclasses.fields(train.TrainConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if args.seed is not None or 'rng_seed' not in values:
        values['rng_seed'] = _seed(args)
    return train.TrainConfig(**values)


def run_gen_graph(args):
    if len(args.seed_matrix) != 4:
        raise UsageError('--seed-matrix needs 4 values')
    cfg = graph.KroneckerConfig(seed_matrix=(tuple(args.seed_matrix[:2]), tuple(args.seed_matrix[2:])),
                                iterations=args.iters, rng_seed=_seed(args))
    g = graph.generate_kronecker(cfg)
    if not args.no_lcc:
        g, _ = graph.largest_connected_component(g)
    fileio.write_graph(args.out, g)
    print('{} nodes, {} edges'.format(g.n_nodes, g.n_edges))
    if args.plot_dir:
        plotting.plot_degree_distribution(g, os.path.join(args.plot_dir, 'degree_distribution.png'))
    return [args.out, fileio.id_map_path(args.out)]


def run_featurize(args):
    g = fileio.read_graph(args.graph)
    feats = features.compute_node_features(g)
    fileio.write_matrix(args.out, feats.values)
    return [args.out]


def run_embed(args):
    g = fileio.read_graph(args.graph)
    emb = features.deepwalk_embeddings(g, dim=args.dim, rng_seed=_seed(args), workers=_threads(args),
                                       walks_per_node=args.walks_per_node, walk_length=args.walk_length,
                                       window=args.window)
    fileio.write_matrix(args.out, emb.values)
    return [args.out]


def run_gen_cascades(args):
    g = fileio.read_graph(args.graph)
    ds = cascades.generate_dataset(g, args.n, args.min_active, tuple(args.split), _seed(args),
                                   t_observe=args.t_observe, exponent=args.exponent,
                                   max_seed_size=args.max_seed_size, filter_on=args.filter_on,
                                   threads=_threads(args))
    fileio.write_cascades(args.out, ds.cascades, g)
    fileio.write_split(args.split_out, ds.split)
    print(ds.summary().to_string())
    return [args.out, args.split_out]


def run_ingest(args):
    g = fileio.read_graph(args.graph)
    records = fileio.read_cascade_records(args.input)
    items = cascades.cascades_from_records(records, g, window=args.window, min_active=args.min_active)
    if not items:
        raise CoupledGNNError('no cascade kept with at least {} active users'.format(args.min_active))
    split = cascades.assign_splits([c.id for c in items], tuple(args.split), _seed(args))
    ds = cascades.Dataset(graph=g, cascades=items, split=split)
    fileio.write_cascades(args.out, ds.cascades, g)
    fileio.write_split(args.split_out, ds.split)
    print(ds.summary().to_string())
    return [args.out, args.split_out]


def _score(pred, truth, epsilon, out=None):
    report = metrics.compute_metrics(pred, truth, epsilon)
    print(metrics.format_report(report))
    if out:
        fileio.write_metrics(out, report)
    return report


def run_train(args):
    ds = fileio.read_dataset(args.graph, args.cascades, args.splits)
    r0 = _load_r0(args, ds.graph)
    cfg = _train_config(args)
    records = []

    def on_epoch(record):
        records.append(record)
        if args.log:
            fileio.write_log(args.log, records)

    try:
        params, log = train.fit(ds, r0, cfg, log_callback=on_epoch)
    except TrainingDiverged as err:
        fileio.write_checkpoint(args.out, err.params)
        if args.log:
            fileio.write_log(args.log, err.log)
        logger.error('training diverged, last good parameters written to %s', args.out)
        raise
    fileio.write_checkpoint(args.out, params)
    outputs = [args.out] + ([args.log] if args.log else [])
    if args.log and not log:
        fileio.write_log(args.log, log)
    test = ds.subset('test')
    if test:
        pred = model.predict(ds.graph, params, test, r0)
        truth = [c.final_size for c in test]
        _score(pred, truth, configs.metrics['epsilon'], args.report_out)
        if args.pred_out:
            fileio.write_predictions(args.pred_out, [c.id for c in test], pred, truth)
        if args.plot_dir:
            plotting.plot_pred_vs_true(pred, truth, os.path.join(args.plot_dir, 'pred_vs_true.png'))
        outputs += [p for p in (args.report_out, args.pred_out) if p]
    if args.plot_dir and log:
        plotting.plot_training_curve(log, os.path.join(args.plot_dir, 'training_curve.png'))
    return outputs


def run_grid(args):
    ds = fileio.read_dataset(args.graph, args.cascades, args.splits)
    r0 = _load_r0(args, ds.graph)
    grids = dict(K=args.grid_K, lr_self_activation=args.grid_lr_self_activation, lr_other=args.grid_lr_other,
                 l2_coeff=args.grid_l2, lam=args.grid_lam)
    best, table = train.grid_search(ds, r0, grids, base=_train_config(args), threads=_threads(args))
    fileio.write_table(args.out, table)
    print(table.to_string(index=False))
    print('best: ' + ', '.join('{}={}'.format(k, getattr(best, k)) for k in train.GRID_KEYS))
    if args.best_config:
        configs.write_config_file(best, args.best_config)
    return [args.out] + ([args.best_config] if args.best_config else [])


def run_eval(args):
    if args.checkpoint:
        missing = [f for f in ('graph', 'cascades', 'splits', 'features', 'embeddings') if not getattr(args, f)]
        if missing:
            raise UsageError('--checkpoint needs ' + ', '.join('--' + m for m in missing))
        ds = fileio.read_dataset(args.graph, args.cascades, args.splits)
        params = fileio.read_checkpoint(args.checkpoint)
        items = ds.subset(args.split)
        if not items:
            raise CoupledGNNError('split {!r} is empty'.format(args.split))
        pred = model.predict(ds.graph, params, items, _load_r0(args, ds.graph))
        truth = [c.final_size for c in items]
        if args.pred_out:
            fileio.write_predictions(args.pred_out, [c.id for c in items], pred, truth)
    elif args.pred and args.truth:
        predictions = fileio.read_predictions(args.pred)
        truth_by_id = {str(rec['id']): len(rec.get('final', [])) for rec in fileio.read_cascade_records(args.truth)}
        missing = [i for i in predictions if i not in truth_by_id]
        if missing:
            raise CoupledGNNError('{} predictions have no truth, e.g. {}'.format(len(missing), missing[0]))
        pred = [p for p, _ in predictions.values()]
        truth = [truth_by_id[i] for i in predictions]
    else:
        raise UsageError('eval needs --pred and --truth, or --checkpoint with the dataset files')
    _score(pred, truth, args.epsilon, args.out)
    if args.plot_dir:
        plotting.plot_pred_vs_true(pred, truth, os.path.join(args.plot_dir, 'pred_vs_true.png'), epsilon=args.epsilon)
    return [p for p in (args.out, args.pred_out) if p]


def run_baseline(args):
    ds = fileio.read_dataset(args.graph, args.cascades, args.splits)
    sets = {name: baseline.feature_set(ds.graph, ds.subset(name), threads=_threads(args)) for name in cascades.SPLITS}
    if args.features_out:
        all_items = [c for name in cascades.SPLITS for c in ds.subset(name)]
        dense = np.vstack([sets[name].dense for name in cascades.SPLITS])
        ids = np.array(ds.graph.node_ids, dtype=object)
        sparse = [list(ids[s]) for name in cascades.SPLITS for s in sets[name].sparse]
        fileio.write_feature_matrix(args.features_out, [c.id for c in all_items], dense, baseline.DENSE_NAMES, sparse)
    test = sets['test']
    if not len(test):
        raise CoupledGNNError('the test split is empty')
    pred, fitted, table = baseline.tune_baseline(sets['train'], sets['val'], test, args.lr_sparse, args.lr_dense,
                                                 args.l2, n_nodes=ds.graph.n_nodes, max_epochs=args.max_epochs)
    print(table.to_string(index=False))
    _score(pred, test.final_size, configs.metrics['epsilon'], args.out)
    if args.pred_out:
        fileio.write_predictions(args.pred_out, test.ids, pred, test.final_size)
    return [p for p in (args.out, args.pred_out, args.features_out) if p]


def _fit_and_score(ds, r0, cfg):
    params, log = train.fit(ds, r0, cfg)
    val_mrse = min(rec['val_mrse'] for rec in log) if log else train.evaluate_mrse(ds.graph, params, ds.subset('val'),
                                                                                   r0)
    test = ds.subset('test')
    test_mrse = train.evaluate_mrse(ds.graph, params, test, r0) if test else math.nan
    return val_mrse, test_mrse


def run_lambda_sweep(args):
    ds = fileio.read_dataset(args.graph, args.cascades, args.splits)
    r0 = _load_r0(args, ds.graph)
    base = _train_config(args)
    rows = []
    for lam in args.lams:
        val_mrse, test_mrse = _fit_and_score(ds, r0, base.replace(lam=lam))
        rows.append(dict(lam=lam, val_mrse=val_mrse, test_mrse=test_mrse))
        logger.info('lambda %g: val MRSE %.5f, test MRSE %.5f', lam, val_mrse, test_mrse)
    table = pd.DataFrame(rows)
    fileio.write_table(args.out, table)
    print(table.to_string(index=False))
    worst = table.loc[table['val_mrse'].idxmax(), 'lam']
    print('largest validation MRSE at lambda = {}'.format(worst))
    if args.plot_dir:
        plotting.plot_sweep(table, 'lam', os.path.join(args.plot_dir, 'lambda_sweep.png'), xlab='lambda',
                            ylab='Validation MRSE')
    return [args.out]


def run_edge_dropout(args):
    ds = fileio.read_dataset(args.graph, args.cascades, args.splits)
    base = _train_config(args)
    r0_full = _load_r0(args, ds.graph)
    emb_dim = fileio.read_matrix(args.embeddings).shape[1]
    rows = []
    for i, fraction in enumerate(args.fractions):
        g = graph.drop_edges_connected(ds.graph, fraction, derive_seed(base.rng_seed, 3, i))
        if args.reuse_r0 or g is ds.graph:
            r0 = r0_full
        else:
            emb = features.deepwalk_embeddings(g, dim=emb_dim, rng_seed=base.rng_seed, workers=_threads(args))
            r0 = features.build_r0(emb, features.compute_node_features(g))
        reduced = cascades.Dataset(graph=g, cascades=ds.cascades, split=ds.split)
        val_mrse, test_mrse = _fit_and_score(reduced, r0, base)
        rows.append(dict(fraction=fraction, n_edges=g.n_edges, val_mrse=val_mrse, test_mrse=test_mrse))
        logger.info('dropout %g: %d edges, test MRSE %.5f', fraction, g.n_edges, test_mrse)
    table = pd.DataFrame(rows)
    fileio.write_table(args.out, table)
    print(table.to_string(index=False))
    monotone = bool(np.all(np.diff(table['test_mrse'].to_numpy()) >= 0))
    print('test MRSE non-decreasing in the dropped fraction: {}'.format('yes' if monotone else 'no'))
    if args.plot_dir:
        plotting.plot_sweep(table, 'fraction', os.path.join(args.plot_dir, 'edge_dropout.png'), y='test_mrse',
                            xlab='Fraction of Edges Removed', ylab='Test MRSE')
    return [args.out]


def run_hop_dist(args):
    g = fileio.read_graph(args.graph)
    items = fileio.read_cascades(args.cascades, g)
    hist = collections.Counter()
    for c in items:
        later = np.setdiff1d(c.final_index, c.observed_index)
        if later.size:
            hist.update(graph.hop_distance_distribution(g, c.observed_index, later))
    hist = dict(sorted(hist.items()))
    total = sum(hist.values())
    if not total:
        raise CoupledGNNError('no activations after the observation window')
    table = pd.DataFrame({'hops': list(hist), 'count': list(hist.values())})
    table['share'] = table['count'] / total
    table['cumulative'] = table['share'].cumsum()
    fileio.write_table(args.out, table)
    print(table.to_string(index=False))
    print('{:.4%} of later activations within {} hops'.format(graph.coverage_within(hist, args.threshold),
                                                            args.threshold))
    if args.plot_dir:
        plotting.plot_hop_histogram(hist, os.path.join(args.plot_dir, 'hop_distance.png'), threshold=args.threshold)
    return [args.out]


def _check_inputs(args):
    for name in args.inputs:
        path = getattr(args, name, None)
        if path is not None and not os.path.exists(path):
            raise UsageError('input file not found: {} ({})'.format(path, '--' + name.replace('_', '-')))


def _manifest_config(args):
    """command-line settings, with training commands recording the TrainConfig resolved from --config and flags"""
    skip = {'func', 'inputs'}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if hasattr(args, 'lr_other'):
        config['train_config'] = dataclasses.asdict(_train_config(args))
    return config


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE
    if args.verbose:
        setup_logging(logging.DEBUG)
    elif args.quiet:
        setup_logging(logging.WARNING)
    else:
        setup_logging(logging.INFO)

    start = time.time()
    limits = threadpool_limits(limits=1) if args.deterministic else contextlib.nullcontext()
    try:
        _check_inputs(args)
        with limits:
            outputs = args.func(args)
    except UsageError as err:
        print('error: {}'.format(err), file=sys.stderr)
        return EXIT_USAGE
    except (CoupledGNNError, OSError, ValueError) as err:
        print('error: {}'.format(err), file=sys.stderr)
        return EXIT_RUNTIME

    if args.manifest:
        inputs = {getattr(args, n): git_blob_hash(getattr(args, n)) for n in args.inputs if getattr(args, n, None)}
        command = args.command + (' ' + args.experiment if args.command == 'experiment' else '')
        RunManifest(command=command, config=_manifest_config(args), seed=_seed(args), inputs=inputs,
                    outputs=list(outputs or []), wall_time=time.time() - start).write(args.manifest)
    return 0


if __name__ == '__main__':
    sys.exit(main())
