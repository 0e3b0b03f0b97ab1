#! /usr/bin/env python

"""
Popularity-prediction error metrics: mean and median relative squared error, mean absolute percentage error and the
fraction of items predicted with relative error at least epsilon.
"""

import dataclasses

import numpy as np
import pandas as pd

from coupledgnn import configs


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    mrse: float
    mrse_median: float
    mape: float
    wro_perc: float
    n_items: int
    epsilon: float

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_frame(self):
        rows = [('MRSE', self.mrse), ('mRSE', self.mrse_median), ('MAPE', self.mape), ('WroPerc', self.wro_perc)]
        df = pd.DataFrame(rows, columns=['metric', 'value'])
        return df.set_index('metric')


def relative_errors(pred, truth):
    """
    Signed relative error (pred - truth) / truth of every item
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError('{} predictions for {} targets'.format(pred.size, truth.size))
    if pred.size == 0:
        raise ValueError('no items to score')
    if np.any(truth < 1):
        raise ValueError('true popularity must be >= 1')
    return (pred - truth) / truth


def mrse(pred, truth):
    return float(np.mean(relative_errors(pred, truth) ** 2))


def compute_metrics(pred, truth, epsilon=None):
    """
    Score predicted popularity against the truth
    :param pred: predicted final sizes
    :param truth: true final sizes, each >= 1
    :param epsilon: relative-error threshold at which a prediction counts as wrong, default 0.5
    :returns MetricsReport
    """
    epsilon = configs.metrics['epsilon'] if epsilon is None else float(epsilon)
    rel = relative_errors(pred, truth)
    rse = rel ** 2
    return MetricsReport(mrse=float(np.mean(rse)), mrse_median=float(np.median(rse)), mape=float(np.mean(np.abs(rel))),
                         wro_perc=float(np.mean(np.abs(rel) >= epsilon)), n_items=int(rel.size), epsilon=epsilon)


def format_report(report):
    """aligned text table of a MetricsReport"""
    header = 'n = {}, epsilon = {}'.format(report.n_items, report.epsilon)
    return header + '\n' + report.to_frame().to_string(float_format=lambda v: '{:.6f}'.format(v))
