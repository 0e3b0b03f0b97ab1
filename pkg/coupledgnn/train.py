#! /usr/bin/env python

"""
Training of the coupled model: Adam with a separate learning rate for the self-activation vector, minibatch epochs
with early stopping on validation MRSE, and exhaustive hyperparameter search.
"""

import concurrent.futures
import dataclasses
import itertools
import logging
import math
import typing

import numpy as np
import pandas as pd

from coupledgnn import configs
from coupledgnn import metrics
from coupledgnn import model
from coupledgnn.common import CascadeError, ModelError, TrainingDiverged, make_rng

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
SPARSE_KEYS = ('p',)
GRID_KEYS = ('K', 'lr_self_activation', 'lr_other', 'l2_coeff', 'lam')


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    lr_self_activation: float = 1e-3
    lr_other: float = 5e-3
    l2_coeff: float = 1e-6
    lam: float = 0.5
    K: int = 3
    hidden: typing.Optional[typing.Tuple[int, ...]] = None
    share_w: bool = False
    batch_size: int = 16
    max_epochs: int = 500
    patience: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.lr_self_activation <= 0 or self.lr_other <= 0:
            raise ValueError('learning rates must be > 0')
        if self.l2_coeff < 0 or self.lam < 0:
            raise ValueError('l2_coeff and lam must be >= 0')
        if self.K < 1:
            raise ValueError('K must be >= 1')
        if self.batch_size < 1:
            raise ValueError('batch_size must be >= 1')
        if self.max_epochs < 0:
            raise ValueError('max_epochs must be >= 0')
        if self.patience < 1:
            raise ValueError('patience must be >= 1')

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True, eq=False)
class OptimizerState:
    step: int
    m: dict
    v: dict

    @classmethod
    def zeros(cls, params):
        tensors = _tensors(params)
        return cls(step=0, m={k: np.zeros_like(t) for k, t in tensors.items()},
                   v={k: np.zeros_like(t) for k, t in tensors.items()})


def _tensors(params):
    return params.tensors if isinstance(params, model.ModelParams) else params


def adam_step(params, grads, state, cfg, sparse_keys=SPARSE_KEYS):
    """
    One bias-corrected Adam update. Inputs are left untouched.
    :param params: ModelParams or dict of name to array
    :param grads: dict of name to gradient, shaped like params
    :param state: OptimizerState
    :param cfg: anything with lr_self_activation (used for sparse_keys) and lr_other (everything else)
    :param sparse_keys: tensor names updated with lr_self_activation
    :returns (updated params of the same kind, updated OptimizerState)
    """
    tensors = _tensors(params)
    if set(grads) != set(tensors):
        raise ValueError('gradient names do not match parameter names')
    step = state.step + 1
    c1 = 1.0 - ADAM_BETA1 ** step
    c2 = 1.0 - ADAM_BETA2 ** step
    new, m_new, v_new = dict(), dict(), dict()
    for name, theta in tensors.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != theta.shape or state.m[name].shape != theta.shape:
            raise ValueError('{}: gradient shape {} does not match parameter shape {}'.format(name, g.shape, theta.shape))
        lr = cfg.lr_self_activation if name in sparse_keys else cfg.lr_other
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        new[name] = theta - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        m_new[name], v_new[name] = m, v
    out = params.with_tensors(new) if isinstance(params, model.ModelParams) else new
    return out, OptimizerState(step=step, m=m_new, v=v_new)


def evaluate_mrse(g, params, cascades, r0, batch_size=64):
    pred = model.predict(g, params, cascades, r0, batch_size=batch_size)
    return metrics.mrse(pred, [c.final_size for c in cascades])


def fit(dataset, r0, cfg, init=None, log_callback=None):
    """
    Train on the train split with early stopping on validation MRSE
    :param dataset: cascades.Dataset with nonempty train and val splits
    :param r0: (n_nodes, h0) initial influence representation
    :param cfg: TrainConfig
    :param init: optional ModelParams to start from
    :param log_callback: called with every epoch's log record as it is produced
    :returns (parameters with the best validation MRSE, list of per-epoch log records)
    """
    train_set = dataset.subset('train')
    val_set = dataset.subset('val')
    if not train_set or not val_set:
        raise CascadeError('training needs nonempty train and val splits')
    g = dataset.graph
    params = init if init is not None else model.init_params(
        r0.shape[1], cfg.K, g.n_nodes, cfg.rng_seed, share_w=cfg.share_w, hidden=cfg.hidden)
    log = []
    if cfg.max_epochs == 0:
        return params, log

    state = OptimizerState.zeros(params)
    rng = make_rng(cfg.rng_seed, 2)
    best, best_val = params, math.inf
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        sums = dict(total=0.0, mrse=0.0, user=0.0)
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start:start + cfg.batch_size]]
            try:
                trace = model.forward_batch(g, params, batch, r0)
            except ModelError as err:
                raise TrainingDiverged('epoch {}: {}'.format(epoch, err), best, log)
            lb = model.loss(trace, batch, params, cfg.l2_coeff, cfg.lam)
            if not math.isfinite(lb.total):
                raise TrainingDiverged('epoch {}: loss is not finite'.format(epoch), best, log)
            grads = model.gradients(trace, batch, params, cfg.l2_coeff, cfg.lam)
            params, state = adam_step(params, grads, state, cfg)
            if not params.is_finite():
                raise TrainingDiverged('epoch {}: parameters are not finite'.format(epoch), best, log)
            sums['total'] += lb.total * len(batch)
            sums['mrse'] += lb.mrse * len(batch)
            sums['user'] += lb.user * len(batch)

        val_mrse = evaluate_mrse(g, params, val_set, r0)
        record = dict(epoch=epoch, train_loss=sums['total'] / len(order), train_mrse=sums['mrse'] / len(order),
                      l_user=sums['user'] / len(order), val_mrse=val_mrse)
        log.append(record)
        if log_callback is not None:
            log_callback(record)
        logger.info('epoch %d: train MRSE %.5f, L_user %.5f, val MRSE %.5f', epoch, record['train_mrse'],
                    record['l_user'], val_mrse)
        if val_mrse < best_val:
            best, best_val, stale = params, val_mrse, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info('stopping after %d epochs without validation improvement', stale)
                break
    return best, log


def grid_points(grids, base):
    """every TrainConfig in the product of the grids, in GRID_KEYS order"""
    keys = [k for k in GRID_KEYS if k in grids]
    for key, values in grids.items():
        if key not in GRID_KEYS:
            raise ValueError('unknown grid {!r}'.format(key))
        if not values:
            raise ValueError('grid {!r} is empty'.format(key))
    for combo in itertools.product(*(grids[k] for k in keys)):
        yield base.replace(**dict(zip(keys, combo)))


def _run_point(dataset, r0, cfg):
    try:
        _, log = fit(dataset, r0, cfg)
    except TrainingDiverged as err:
        logger.warning('grid point %s diverged: %s', _point_label(cfg), err)
        return math.inf, len(err.log), 'diverged'
    if not log:
        return evaluate_mrse(dataset.graph, model.init_params(
            r0.shape[1], cfg.K, dataset.graph.n_nodes, cfg.rng_seed, share_w=cfg.share_w, hidden=cfg.hidden),
            dataset.subset('val'), r0), 0, 'ok'
    return min(rec['val_mrse'] for rec in log), len(log), 'ok'


def _point_label(cfg):
    return ', '.join('{}={}'.format(k, getattr(cfg, k)) for k in GRID_KEYS)


def grid_search(dataset, r0, grids=None, base=None, threads=1):
    """
    Train every combination of the grids and pick the one with the lowest validation MRSE; ties go to the smaller K,
    then the smaller lr_other
    :param dataset: cascades.Dataset
    :param r0: initial influence representation
    :param grids: dict of TrainConfig field to list of values; defaults to configs.grids
    :param base: TrainConfig supplying the fields not searched
    :param threads: worker processes
    :returns (best TrainConfig, pandas DataFrame with one row per grid point)
    """
    grids = configs.grids if grids is None else grids
    base = base or TrainConfig()
    points = list(grid_points(grids, base))
    logger.info('grid search over %d configurations', len(points))
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_point, itertools.repeat(dataset), itertools.repeat(r0), points))
    else:
        results = [_run_point(dataset, r0, cfg) for cfg in points]

    rows = []
    for cfg, (val_mrse, epochs, status) in zip(points, results):
        row = {k: getattr(cfg, k) for k in GRID_KEYS}
        row.update(val_mrse=val_mrse, epochs=epochs, status=status)
        rows.append(row)
        logger.info('%s: val MRSE %.5f', _point_label(cfg), val_mrse)
    table = pd.DataFrame(rows, columns=list(GRID_KEYS) + ['val_mrse', 'epochs', 'status'])
    best_idx = min(range(len(points)), key=lambda i: (results[i][0], points[i].K, points[i].lr_other))
    return points[best_idx], table

