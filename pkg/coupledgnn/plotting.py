#! /usr/bin/env python

"""
Figures for graphs, cascades, training runs and the experiments. Every function draws one figure, saves it to sfile
and closes it.
"""

import os

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({'font.size': 12})  # all font sizes are 12 unless otherwise specified


def _save(fig, sfile, dpi=200):
    directory = os.path.dirname(os.path.abspath(sfile))
    os.makedirs(directory, exist_ok=True)
    fig.savefig(sfile, dpi=dpi)
    plt.close(fig)
    return sfile


def plot_degree_distribution(g, sfile, ttl=None):
    """
    In- and out-degree distributions on log-log axes
    :param g: Graph
    :param sfile: output image path
    :param ttl: optional plot title
    """
    fig, ax = plt.subplots(figsize=(8, 6))
    for deg, color, label in [(g.in_degree(), 'mediumblue', 'in-degree'), (g.out_degree(), 'darkorange', 'out-degree')]:
        counts = np.bincount(deg)
        k = np.flatnonzero(counts)
        k = k[k > 0]
        ax.scatter(k, counts[k], color=color, edgecolor='k', s=25, linewidth=.5, label=label)
    ax.set_xscale('log')
    ax.set_yscale('log')
    ax.set_xlabel('Degree')
    ax.set_ylabel('Number of Users')
    ax.legend()
    ax.set_title(ttl or '{} users, {} edges'.format(g.n_nodes, g.n_edges))
    return _save(fig, sfile)


def plot_hop_histogram(histogram, sfile, threshold=3):
    """
    Bar chart of hop distances from early adopters to later adopters, with the cumulative share within threshold
    :param histogram: dict of hop count to number of activations, math.inf for unreachable
    """
    finite = sorted(h for h in histogram if np.isfinite(h))
    total = sum(histogram.values())
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.bar(finite, [histogram[h] / total for h in finite], color='lightgray', edgecolor='k')
    within = sum(histogram[h] for h in finite if h <= threshold) / total if total else float('nan')
    ax.axvline(x=threshold + .5, color='dimgray', linestyle='--')
    ax.text(threshold + .6, ax.get_ylim()[1] * .9, '{:.2%} within {} hops'.format(within, threshold))
    ax.set_xlabel('Hops from Early Adopters')
    ax.set_ylabel('Share of Later Activations')
    return _save(fig, sfile)


def plot_sweep(df, x, sfile, y='val_mrse', xlab=None, ylab=None, ttl=None):
    """
    Metric against a swept setting, one marker per row of df
    """
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.plot(range(len(df)), df[y], color='mediumblue', marker='o')
    ax.set_xticks(range(len(df)))
    ax.set_xticklabels([str(v) for v in df[x]])
    ax.set_xlabel(xlab or x)
    ax.set_ylabel(ylab or y)
    if ttl:
        ax.set_title(ttl)
    return _save(fig, sfile)


def plot_pred_vs_true(pred, truth, sfile, epsilon=0.5, ttl=None):
    """
    Predicted against true popularity on log axes, with y = x and the relative error band of width epsilon
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(8, 8))
    ax.scatter(truth, pred, color='mediumblue', edgecolor='k', s=20, linewidth=.5)
    lo = max(min(truth.min(), pred.min()), 1.0)
    hi = max(truth.max(), pred.max())
    line = np.geomspace(lo, hi, 50)
    ax.plot(line, line, color='k')
    ax.fill_between(line, line * (1 - epsilon), line * (1 + epsilon), color='lightgray', alpha=.5)
    ax.set_xscale('log')
    ax.set_yscale('log')
    ax.set_xlabel('True Popularity')
    ax.set_ylabel('Predicted Popularity')
    if ttl:
        ax.set_title(ttl)
    return _save(fig, sfile)


def plot_training_curve(log, sfile):
    """
    Train and validation MRSE per epoch from a training log
    """
    epochs = [rec['epoch'] for rec in log]
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.plot(epochs, [rec['train_mrse'] for rec in log], color='darkorange', label='train')
    ax.plot(epochs, [rec['val_mrse'] for rec in log], color='mediumblue', label='validation')
    ax.set_xlabel('Epoch')
    ax.set_ylabel('MRSE')
    ax.legend()
    return _save(fig, sfile)
