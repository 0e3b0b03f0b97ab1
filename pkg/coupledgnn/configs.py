#! /usr/bin/env python

"""
Default settings for graph generation, embeddings, cascade simulation, hyperparameter search and the experiments,
plus the reader and writer for flat key = value configuration files.
"""

import configparser
import dataclasses
import typing

from coupledgnn.common import SchemaError, atomic_write_text


kronecker = dict(
    seed_matrix=[[0.9, 0.5], [0.5, 0.1]],
    iterations=11,
    max_iterations=20
)

deepwalk = dict(
    dim=32,
    walks_per_node=10,
    walk_length=40,
    window=5,
    negative=5,
    epochs=5,
    alpha=0.025,
    min_alpha=0.0001
)

centrality = dict(
    damping=0.85,
    tol=1e-9,
    max_iter=10000
)

cascades = dict(
    n_cascades=108600,
    exponent=2.5,
    max_seed_size=100,
    t_observe=2,
    min_active=3,
    filter_on='final',
    split=(0.8, 0.1, 0.1),
    max_exact_edges=20,
    ingest_min_active=5,
    ingest_windows=[3600, 7200, 10800]
)

# learning-rate ladders; lr_self_activation also drives the sparse node-id weights of the baseline
grids = dict(
    lr_self_activation=[1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2],
    lr_other=[0.0005, 0.001, 0.005, 0.01],
    l2_coeff=[1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
    K=[2, 3, 4],
    lam=[0.5]
)

experiments = dict(
    lambda_sweep=[0.0, 0.5, 1.0, 10.0, 20.0],
    dropout_fractions=[0.0, 0.05, 0.10, 0.20],
    hop_threshold=3,
    dropout_attempts_per_edge=50
)

baseline = dict(
    lr_sparse=1e-3,
    lr_dense=5e-3,
    l2=1e-6,
    max_epochs=2000,
    patience=50,
    min_community_size=2
)

metrics = dict(
    epsilon=0.5
)


def _coerce(value, annotation, path, key):
    """
    Convert a config string to the type declared on the dataclass field
    """
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value.lower() in ('none', ''):
            return None
        annotation = args[0]
        origin = typing.get_origin(annotation)
    try:
        if annotation is bool:
            lowered = value.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(value)
        if origin in (tuple, list):
            inner = typing.get_args(annotation)[0]
            items = [v.strip() for v in value.split(',') if v.strip()]
            return tuple(inner(v) for v in items)
        if annotation is int:
            return int(value)
        if annotation is float:
            return float(value)
        return annotation(value)
    except ValueError:
        raise SchemaError(path, 'cannot read {} = {!r} as {}'.format(key, value, getattr(annotation, '__name__', annotation)))


def read_config_file(path, cls):
    """
    Read a flat key = value file into keyword arguments for a config dataclass
    :param path: config file path; blank lines and # comments are ignored
    :param cls: dataclass whose fields the keys must name
    :returns dictionary of field name to typed value
    """
    with open(path, encoding='utf-8') as f:
        text = f.read()
    parser = configparser.ConfigParser(comment_prefixes=('#',), inline_comment_prefixes=('#',),
                                       delimiters=('=',))
    parser.optionxform = str
    try:
        parser.read_string('[config]\n' + text, source=str(path))
    except configparser.Error as err:
        raise SchemaError(path, str(err).splitlines()[0])

    hints = typing.get_type_hints(cls)
    fields = {f.name for f in dataclasses.fields(cls)}
    values = dict()
    for key, raw in parser.items('config'):
        if key not in fields:
            raise SchemaError(path, 'unknown key {!r}'.format(key))
        values[key] = _coerce(raw.strip(), hints[key], path, key)
    return values


def format_config(cfg):
    """
    Render a config dataclass in the key = value format read by read_config_file
    """
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, (tuple, list)):
            value = ','.join(repr(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append('{} = {}'.format(f.name, value))
    return '\n'.join(lines) + '\n'


def write_config_file(cfg, path):
    atomic_write_text(path, format_config(cfg))
