#! /usr/bin/env python

"""
Readers and writers for every file the package produces or consumes: edge lists with their id maps, binary node
matrices, cascade JSON lines, split files, model checkpoints, training logs, baseline feature matrices, predictions
and metrics reports. All writers go through an atomic rename.
"""

import csv
import io
import json
import logging
import os
import struct

import numpy as np
import pandas as pd

from coupledgnn.cascades import SPLITS, Cascade, Dataset
from coupledgnn.common import CascadeError, SchemaError, atomic_write_bytes, atomic_write_text
from coupledgnn.graph import Graph
from coupledgnn.model import ModelParams, param_shapes

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'CGNN1'


def id_map_path(edge_path):
    """g.tsv -> g.ids.tsv"""
    root, ext = os.path.splitext(os.fspath(edge_path))
    return root + '.ids' + (ext or '.tsv')


def _read_tsv(path, n_cols, comments=False):
    """
    Tab-separated text read verbatim: no quoting, no NA parsing. With comments=True a line starting with '#' and
    holding no tab is skipped, so ids such as '#tag' still work as edge endpoints.
    """
    try:
        with open(path, encoding='utf-8') as f:
            lines = f.read().splitlines()
    except UnicodeDecodeError:
        raise SchemaError(path, 'file is not UTF-8 text')
    if comments:
        lines = ['' if line.startswith('#') and '\t' not in line else line for line in lines]
    try:
        df = pd.read_csv(io.StringIO('\n'.join(lines) + '\n'), sep='\t', header=None, dtype=str,
                         keep_default_na=False, skip_blank_lines=True, quoting=csv.QUOTE_NONE)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=range(n_cols))
    except pd.errors.ParserError as err:
        raise SchemaError(path, str(err).strip())
    if df.shape[1] != n_cols:
        raise SchemaError(path, 'expected {} tab-separated columns, found {}'.format(n_cols, df.shape[1]))
    blank = (df == '').any(axis=1).to_numpy()
    if blank.any():
        raise SchemaError(path, 'empty field', line=int(np.flatnonzero(blank)[0]) + 1)
    return df


def _check_ids(path, node_ids):
    for ext in node_ids:
        text = str(ext)
        if not text or any(ch in text for ch in '\t\r\n'):
            raise SchemaError(path, 'node id {!r} is empty or holds a tab or line break'.format(text))


def _write_id_map(path, node_ids):
    atomic_write_text(path, ''.join('{}\t{}\n'.format(ext, i) for i, ext in enumerate(node_ids)))


def write_graph(path, g):
    """
    Write the edge list as external ids and the id map next to it. Ids are written verbatim, without quoting.
    """
    _check_ids(path, g.node_ids)
    ids = g.node_ids
    atomic_write_text(path, ''.join('{}\t{}\n'.format(ids[u], ids[v]) for u, v in zip(g.src.tolist(),
                                                                                     g.dst.tolist())))
    _write_id_map(id_map_path(path), ids)


def read_graph(path, write_id_map=False):
    """
    Load an edge list. Node indices follow the id map next to the file when there is one, otherwise the order of
    first appearance.
    :param path: edge-list file, one src<TAB>dst per line
    :param write_id_map: write the id map when none exists
    :returns Graph
    """
    edges = _read_tsv(path, 2, comments=True)
    src_ids, dst_ids = edges[0].to_numpy(dtype=object), edges[1].to_numpy(dtype=object)
    map_path = id_map_path(path)
    if os.path.exists(map_path):
        idmap = _read_tsv(map_path, 2)
        try:
            index = idmap[1].astype(np.int64).to_numpy()
        except ValueError:
            raise SchemaError(map_path, 'index column is not an integer')
        if not np.array_equal(np.sort(index), np.arange(index.size)):
            raise SchemaError(map_path, 'indices must be 0..n-1 without gaps')
        node_ids = [None] * index.size
        for ext, i in zip(idmap[0], index):
            node_ids[i] = ext
    else:
        node_ids = list(pd.unique(np.column_stack([src_ids, dst_ids]).ravel())) if len(edges) else []
    lookup = {ext: i for i, ext in enumerate(node_ids)}
    if len(lookup) != len(node_ids):
        raise SchemaError(map_path, 'duplicate external id')
    try:
        src = np.array([lookup[x] for x in src_ids], dtype=np.int64)
        dst = np.array([lookup[x] for x in dst_ids], dtype=np.int64)
    except KeyError as err:
        raise SchemaError(path, 'node {} is missing from {}'.format(err.args[0], map_path))
    g = Graph.from_edges(len(node_ids), src, dst, node_ids=node_ids)
    logger.info('read graph with %d nodes and %d edges from %s', g.n_nodes, g.n_edges, path)
    if write_id_map and not os.path.exists(map_path):
        _write_id_map(map_path, node_ids)
    return g


def write_matrix(path, values):
    """[u32 n][u32 d][f64 x n*d], little-endian, row-major"""
    values = np.ascontiguousarray(values, dtype='<f8')
    if values.ndim != 2:
        raise ValueError('matrix must be two-dimensional')
    atomic_write_bytes(path, struct.pack('<II', *values.shape) + values.tobytes())


def read_matrix(path):
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < 8:
        raise SchemaError(path, 'truncated header')
    n, d = struct.unpack_from('<II', data)
    if len(data) != 8 + 8 * n * d:
        raise SchemaError(path, 'expected {} bytes for a {} x {} matrix, found {}'.format(8 + 8 * n * d, n, d,
                                                                                        len(data)))
    return np.frombuffer(data, dtype='<f8', offset=8).reshape(n, d).astype(np.float64)


def cascade_record(c, g):
    ids = g.node_ids
    return {'id': c.id,
            'activations': [[ids[v], t] for v, t in c.activations],
            'observed': [ids[v] for v in c.observed_index],
            'final': [ids[v] for v in c.final_index]}


def write_cascades(path, cascade_list, g):
    lines = [json.dumps(cascade_record(c, g)) for c in cascade_list]
    atomic_write_text(path, ''.join(line + '\n' for line in lines))


def iter_json_lines(path):
    """yield (line number, parsed object) for every nonblank line"""
    with open(path, encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(path, err.msg, line=lineno)


def read_cascade_records(path):
    """raw records of a cascade file, for cascades.cascades_from_records"""
    out = []
    for lineno, rec in iter_json_lines(path):
        if not isinstance(rec, dict) or 'id' not in rec or 'activations' not in rec:
            raise SchemaError(path, 'record needs "id" and "activations"', line=lineno)
        out.append(rec)
    return out


def read_cascades(path, g):
    """
    Read a cascade file written against graph g
    :returns list of Cascade
    """
    index = g.index_of()
    out = []
    for lineno, rec in iter_json_lines(path):
        try:
            activations = tuple((index[str(n)], t) for n, t in rec['activations'])
            observed = frozenset(index[str(n)] for n in rec['observed'])
            final = frozenset(index[str(n)] for n in rec['final'])
            out.append(Cascade(id=str(rec['id']), activations=activations, observed_active=observed,
                               final_active=final))
        except KeyError as err:
            raise SchemaError(path, 'unknown node or missing field {}'.format(err), line=lineno)
        except (TypeError, ValueError, CascadeError) as err:
            raise SchemaError(path, str(err), line=lineno)
    return out


def write_split(path, split):
    atomic_write_text(path, ''.join('{}\t{}\n'.format(cid, name) for cid, name in split.items()))


def read_split(path):
    df = _read_tsv(path, 2)
    bad = ~df[1].isin(SPLITS)
    if bad.any():
        raise SchemaError(path, 'unknown split {!r}'.format(df[1][bad].iloc[0]), line=int(np.flatnonzero(bad)[0]) + 1)
    if df[0].duplicated().any():
        raise SchemaError(path, 'duplicate cascade id {!r}'.format(df[0][df[0].duplicated()].iloc[0]))
    return dict(zip(df[0], df[1]))


def read_dataset(graph_path, cascade_path, split_path):
    g = read_graph(graph_path)
    return Dataset(graph=g, cascades=read_cascades(cascade_path, g), split=read_split(split_path))


def checkpoint_bytes(params):
    """
    CGNN1, then u32 K, u32 h^(0..K), u8 share_w, u32 n_nodes, then every tensor as little-endian f64 in
    declaration order
    """
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack('<I', params.K))
    buf.write(struct.pack('<{}I'.format(len(params.dims)), *params.dims))
    buf.write(struct.pack('<BI', int(params.share_w), params.n_nodes))
    for t in params.tensors.values():
        buf.write(np.ascontiguousarray(t, dtype='<f8').tobytes())
    return buf.getvalue()


def write_checkpoint(path, params):
    atomic_write_bytes(path, checkpoint_bytes(params))


def read_checkpoint(path):
    with open(path, 'rb') as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise SchemaError(path, 'not a checkpoint (bad magic)')
    pos = len(CHECKPOINT_MAGIC)
    try:
        (K,) = struct.unpack_from('<I', data, pos)
        pos += 4
        dims = struct.unpack_from('<{}I'.format(K + 1), data, pos)
        pos += 4 * (K + 1)
        share_w, n_nodes = struct.unpack_from('<BI', data, pos)
        pos += 5
    except struct.error:
        raise SchemaError(path, 'truncated header')
    shapes = param_shapes(dims, bool(share_w), n_nodes)
    expected = pos + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(data) != expected:
        raise SchemaError(path, 'expected {} bytes, found {}'.format(expected, len(data)))
    tensors = dict()
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        tensors[name] = np.frombuffer(data, dtype='<f8', count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    return ModelParams(dims=dims, share_w=bool(share_w), n_nodes=n_nodes, tensors=tensors)


def json_lines(records):
    return ''.join(json.dumps(r) + '\n' for r in records)


def write_log(path, records):
    atomic_write_text(path, json_lines(records))


def read_log(path):
    return [rec for _, rec in iter_json_lines(path)]


def write_feature_matrix(path, cascade_ids, dense, names, sparse):
    """
    Baseline features: a header of feature names, one row per cascade, and the sparse node-id block as
    space-separated id:1 pairs in the trailing column
    """
    df = pd.DataFrame(np.asarray(dense), columns=list(names))
    df.insert(0, 'cascade_id', list(cascade_ids))
    df['node_ids'] = [' '.join('{}:1'.format(n) for n in ids) for ids in sparse]
    atomic_write_text(path, df.to_csv(index=False, lineterminator='\n', float_format='%.17g'))


def read_feature_matrix(path):
    """:returns (cascade ids, dense DataFrame, list of sparse id lists)"""
    try:
        df = pd.read_csv(path, dtype={'cascade_id': str, 'node_ids': str}, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise SchemaError(path, str(err).strip())
    if 'cascade_id' not in df or 'node_ids' not in df:
        raise SchemaError(path, 'missing cascade_id or node_ids column')
    sparse = [[tok.rsplit(':', 1)[0] for tok in cell.split()] for cell in df['node_ids']]
    dense = df.drop(columns=['cascade_id', 'node_ids']).astype(np.float64)
    return df['cascade_id'].tolist(), dense, sparse


def write_predictions(path, ids, pred, truth):
    records = [{'id': str(i), 'prediction': float(p), 'truth': int(t)} for i, p, t in zip(ids, pred, truth)]
    atomic_write_text(path, json_lines(records))


def read_predictions(path):
    """:returns dict of cascade id to (prediction, truth or None)"""
    out = dict()
    for lineno, rec in iter_json_lines(path):
        try:
            out[str(rec['id'])] = (float(rec['prediction']), rec.get('truth'))
        except (KeyError, TypeError, ValueError):
            raise SchemaError(path, 'record needs "id" and a numeric "prediction"', line=lineno)
    return out


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + '\n')


def write_metrics(path, report):
    write_json(path, report.to_dict())


def write_table(path, df):
    """tab-separated text table with a header row"""
    atomic_write_text(path, df.to_csv(sep='\t', lineterminator='\n', float_format='%.17g'))
