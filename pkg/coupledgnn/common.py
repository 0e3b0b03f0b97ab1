#! /usr/bin/env python

"""
Shared helpers: the package exception hierarchy, seeded random streams, content hashes and atomic file writes.
"""

import hashlib
import logging
import os
import tempfile

import numpy as np

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class CoupledGNNError(Exception):
    """Base class for every error raised by the package."""


class GraphError(CoupledGNNError):
    pass


class ConvergenceError(GraphError):
    def __init__(self, feature, iterations, residual):
        self.feature = feature
        self.iterations = iterations
        self.residual = residual
        super().__init__('{} did not converge after {} iterations (residual {:.3e})'.format(
            feature, iterations, residual))


class EdgeDropoutError(GraphError):
    def __init__(self, removed, n_edges, target):
        self.removed = removed
        self.achieved_fraction = removed / n_edges if n_edges else 0.0
        super().__init__('removed only {} of {} target edges without disconnecting the graph '
                         '(achieved fraction {:.4f})'.format(removed, target, self.achieved_fraction))


class CascadeError(CoupledGNNError):
    pass


class ModelError(CoupledGNNError):
    pass


class TrainingDiverged(ModelError):
    def __init__(self, message, params, log):
        self.params = params
        self.log = log
        super().__init__(message)


class BaselineDiverged(ModelError):
    pass


class SchemaError(CoupledGNNError):
    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        if line is None:
            super().__init__('{}: {}'.format(path, message))
        else:
            super().__init__('{}:{}: {}'.format(path, line, message))


def setup_logging(level=logging.INFO):
    logging.basicConfig(level=level, format=LOG_FORMAT)


def make_rng(seed, *stream):
    """
    Build an independent numpy Generator for one named stream of a seeded computation
    :param seed: integer seed of the whole computation
    :param stream: integers identifying the stream, e.g. (0, cascade_index)
    :returns numpy.random.Generator
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


def derive_seed(seed, *stream):
    """
    Draw a plain integer seed for libraries that take one (gensim)
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return int(ss.generate_state(1, dtype=np.uint32)[0] & 0x7fffffff)


def git_blob_hash(path):
    """
    Content hash of a file, computed the way git hashes blobs
    :param path: file path
    :returns hex digest string
    """
    with open(path, 'rb') as f:
        data = f.read()
    h = hashlib.sha1()
    h.update('blob {}\0'.format(len(data)).encode('ascii'))
    h.update(data)
    return h.hexdigest()


def atomic_write_bytes(path, data):
    """
    Write bytes to path through a temporary file in the same directory and an atomic rename
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.{}.'.format(os.path.basename(path)))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode('utf-8'))
