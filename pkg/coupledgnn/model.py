#! /usr/bin/env python

"""
Coupled graph neural networks for popularity prediction.

A state network carries one activation value s_v per user and an influence network carries a vector r_v per user.
At each layer the state of v aggregates its in-neighbours' states weighted by an influence gate computed from their
representations, plus a self-activation term p_v; the representation of v aggregates its in-neighbours'
representations with attention, each message scaled by a state gate of the sender. Users observed active stay
clamped at state 1. The predicted popularity is the sum of the final states.

Gradients are computed in reverse mode by hand from the quantities kept in ForwardTrace.
"""

import dataclasses
import functools
import logging
import math

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from coupledgnn.common import ModelError, make_rng

logger = logging.getLogger(__name__)

GATE_HIDDEN = 8
PROB_CLIP = 1e-7


def param_shapes(dims, share_w, n_nodes):
    """
    Shapes of every trainable tensor in declaration order
    :param dims: hidden sizes h^(0), ..., h^(K)
    :param share_w: one transform per layer for both networks instead of W_s and W_r
    :param n_nodes: number of users, the length of p
    :returns dict of tensor name to shape
    """
    shapes = dict()
    for k in range(len(dims) - 1):
        h_in, h_out = dims[k], dims[k + 1]
        shapes['W_s.{}'.format(k)] = (h_out, h_in)
        shapes['beta.{}'.format(k)] = (2 * h_out,)
        shapes['mu_s.{}'.format(k)] = ()
        shapes['mu_a.{}'.format(k)] = ()
        if not share_w:
            shapes['W_r.{}'.format(k)] = (h_out, h_in)
        shapes['gamma.{}'.format(k)] = (2 * h_out,)
        shapes['gate_w1.{}'.format(k)] = (GATE_HIDDEN,)
        shapes['gate_b1.{}'.format(k)] = (GATE_HIDDEN,)
        shapes['gate_W2.{}'.format(k)] = (GATE_HIDDEN, GATE_HIDDEN)
        shapes['gate_b2.{}'.format(k)] = (GATE_HIDDEN,)
        shapes['gate_w3.{}'.format(k)] = (GATE_HIDDEN,)
        shapes['gate_b3.{}'.format(k)] = ()
        shapes['zeta_r.{}'.format(k)] = ()
        shapes['zeta_b.{}'.format(k)] = ()
    shapes['p'] = (n_nodes,)
    return shapes


@dataclasses.dataclass(eq=False)
class ModelParams:
    dims: tuple
    share_w: bool
    n_nodes: int
    tensors: dict

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        expected = param_shapes(self.dims, self.share_w, self.n_nodes)
        if list(expected) != list(self.tensors):
            raise ModelError('parameter names do not match the configuration')
        for name, shape in expected.items():
            t = np.asarray(self.tensors[name], dtype=np.float64)
            if t.shape != shape:
                raise ModelError('{} has shape {}, expected {}'.format(name, t.shape, shape))
            self.tensors[name] = t

    @property
    def K(self):
        return len(self.dims) - 1

    def get(self, name, k):
        if name == 'W_r' and self.share_w:
            name = 'W_s'
        return self.tensors['{}.{}'.format(name, k)]

    @property
    def p(self):
        return self.tensors['p']

    def n_parameters(self):
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self):
        return self.with_tensors({k: v.copy() for k, v in self.tensors.items()})

    def with_tensors(self, tensors):
        return ModelParams(dims=self.dims, share_w=self.share_w, n_nodes=self.n_nodes,
                           tensors={name: tensors[name] for name in self.tensors})

    def is_finite(self):
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(h0, K, n_nodes, rng_seed, share_w=False, hidden=None):
    """
    Glorot-uniform weights, unit mixing scalars, zero gate biases and zero self-activation
    :param h0: size of the initial influence representation
    :param K: number of layers
    :param n_nodes: number of users
    :param rng_seed: integer seed
    :param share_w: use one transform per layer for both networks
    :param hidden: optional sizes h^(1), ..., h^(K); defaults to h0 for every layer
    :returns ModelParams
    """
    if K < 1:
        raise ValueError('K must be >= 1')
    if h0 < 1:
        raise ValueError('h0 must be >= 1')
    hidden = tuple(hidden) if hidden else (h0,) * K
    if len(hidden) != K:
        raise ValueError('hidden must give {} sizes'.format(K))
    dims = (h0,) + hidden
    rng = make_rng(rng_seed)
    tensors = dict()
    for name, shape in param_shapes(dims, share_w, n_nodes).items():
        base = name.split('.')[0]
        if base in ('W_s', 'W_r'):
            tensors[name] = _glorot(rng, shape, shape[1], shape[0])
        elif base in ('beta', 'gamma'):
            tensors[name] = _glorot(rng, shape, shape[0], 1)
        elif base == 'gate_w1':
            tensors[name] = _glorot(rng, shape, 1, GATE_HIDDEN)
        elif base == 'gate_W2':
            tensors[name] = _glorot(rng, shape, GATE_HIDDEN, GATE_HIDDEN)
        elif base == 'gate_w3':
            tensors[name] = _glorot(rng, shape, GATE_HIDDEN, 1)
        elif base in ('mu_s', 'mu_a', 'zeta_r', 'zeta_b'):
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return ModelParams(dims=dims, share_w=share_w, n_nodes=n_nodes, tensors=tensors)


@dataclasses.dataclass(frozen=True, eq=False)
class EdgeIndex:
    """
    Edges of a graph ordered by target and, within a target, by the sender's external id, with sparse operators that
    sum per-edge values into targets (by_dst) or senders (by_src)
    """
    src: np.ndarray
    dst: np.ndarray
    by_dst: sp.csr_matrix
    by_src: sp.csr_matrix
    seg_starts: np.ndarray
    seg_counts: np.ndarray
    seg_nonempty: np.ndarray


@functools.lru_cache(maxsize=8)
def edge_index(g):
    rank = np.empty(g.n_nodes, dtype=np.int64)
    rank[np.argsort(np.array(g.node_ids, dtype=object), kind='stable')] = np.arange(g.n_nodes)
    src, dst = g.src, g.dst
    order = np.lexsort((rank[src], dst))
    src, dst = src[order], dst[order]
    m = src.size
    ones = np.ones(m)
    positions = np.arange(m)
    by_dst = sp.csr_matrix((ones, (dst, positions)), shape=(g.n_nodes, m))
    by_dst.sort_indices()
    by_src = sp.csr_matrix((ones, (src, positions)), shape=(g.n_nodes, m))
    by_src.sort_indices()
    counts = np.bincount(dst, minlength=g.n_nodes)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    nonempty = counts > 0
    return EdgeIndex(src=src, dst=dst, by_dst=by_dst, by_src=by_src, seg_starts=starts[nonempty],
                     seg_counts=counts[nonempty], seg_nonempty=nonempty)


def _segment_sum(op, x):
    """sum per-edge values x of shape (B, E, ...) into nodes with operator op (n x E); returns (B, n, ...)"""
    b, m = x.shape[0], x.shape[1]
    rest = x.shape[2:]
    flat = np.moveaxis(x, 1, 0).reshape(m, -1)
    out = op @ flat
    return np.moveaxis(out.reshape((op.shape[0], b) + rest), 0, 1)


def _segment_softmax(ei, e):
    """softmax of edge logits e (B, E) over the in-edges of each target"""
    if e.shape[1] == 0:
        return e.copy()
    peak = np.maximum.reduceat(e, ei.seg_starts, axis=1)
    shifted = np.exp(e - np.repeat(peak, ei.seg_counts, axis=1))
    denom = _segment_sum(ei.by_dst, shifted)
    return shifted / denom[:, ei.dst]


def _transform(x, w, exact):
    """x @ w.T over the last axis; exact=True accumulates column by column in a fixed order"""
    if not exact:
        return x @ w.T
    out = x[..., 0:1] * w[:, 0]
    for j in range(1, w.shape[1]):
        out = out + x[..., j:j + 1] * w[:, j]
    return out


def _dot(x, v, exact):
    if not exact:
        return x @ v
    out = x[..., 0] * v[0]
    for j in range(1, v.shape[0]):
        out = out + x[..., j] * v[j]
    return out


@dataclasses.dataclass(eq=False)
class LayerTrace:
    Ps: np.ndarray
    gate: np.ndarray
    a: np.ndarray
    sig: np.ndarray
    Pr: np.ndarray
    e: np.ndarray
    alpha: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    u: np.ndarray
    gs: np.ndarray
    coef: np.ndarray
    b: np.ndarray


@dataclasses.dataclass(eq=False)
class ForwardTrace:
    """
    Everything computed by a forward pass over a batch of cascades. s[k] has shape (B, n); r[k] has shape (B, n, h)
    except r[0], the shared initial representation, of shape (1, n, h0).
    """
    cascade_ids: tuple
    seed_mask: np.ndarray
    s: list
    r: list
    layers: list
    n_hat: np.ndarray
    edges: EdgeIndex

    @property
    def batch_size(self):
        return self.seed_mask.shape[0]

    def attention_row_sums(self, k):
        """sum of attention weights into every node at layer k, shape (B, n)"""
        return _segment_sum(self.edges.by_dst, self.layers[k].alpha)


def _seed_mask(cascades, n_nodes):
    mask = np.zeros((len(cascades), n_nodes), dtype=bool)
    for i, c in enumerate(cascades):
        idx = c.observed_index
        if idx.size and (idx.min() < 0 or idx.max() >= n_nodes):
            raise ModelError('cascade {} has observed users outside the graph'.format(c.id))
        mask[i, idx] = True
    return mask


def forward_batch(g, params, cascades, r0, exact_order=False):
    """
    Forward pass of both networks over a batch of cascades
    :param g: Graph
    :param params: ModelParams
    :param cascades: list of Cascade
    :param r0: (n_nodes, h0) initial influence representation
    :param exact_order: accumulate dense transforms column by column so that results are bit-identical under node
        relabelling
    :returns ForwardTrace
    """
    r0 = np.asarray(r0, dtype=np.float64)
    if params.n_nodes != g.n_nodes:
        raise ModelError('parameters cover {} users, graph has {}'.format(params.n_nodes, g.n_nodes))
    if r0.shape != (g.n_nodes, params.dims[0]):
        raise ModelError('r0 has shape {}, expected {}'.format(r0.shape, (g.n_nodes, params.dims[0])))
    if not cascades:
        raise ModelError('empty batch')
    ei = edge_index(g)
    src, dst = ei.src, ei.dst
    seed = _seed_mask(cascades, g.n_nodes)
    s = seed.astype(np.float64)
    r = r0[None]
    s_list, r_list, layers = [s], [r], []
    p = params.p
    for k in range(params.K):
        o = params.dims[k + 1]
        beta, gamma = params.get('beta', k), params.get('gamma', k)
        # state network
        Ps = _transform(r, params.get('W_s', k), exact_order)
        gate = _dot(Ps, beta[:o], exact_order)[:, src] + _dot(Ps, beta[o:], exact_order)[:, dst]
        a = _segment_sum(ei.by_dst, gate * s[:, src]) + p
        sig = expit(params.get('mu_s', k) * s + params.get('mu_a', k) * a)
        s_next = np.where(seed, 1.0, sig)
        # influence network
        Pr = Ps if params.share_w else _transform(r, params.get('W_r', k), exact_order)
        e = _dot(Pr, gamma[:o], exact_order)[:, src] + _dot(Pr, gamma[o:], exact_order)[:, dst]
        alpha = _segment_softmax(ei, e)
        h1 = np.tanh(s[..., None] * params.get('gate_w1', k) + params.get('gate_b1', k))
        h2 = np.tanh(_transform(h1, params.get('gate_W2', k), exact_order) + params.get('gate_b2', k))
        u = _dot(h2, params.get('gate_w3', k), exact_order) + params.get('gate_b3', k)
        gs = np.logaddexp(0.0, u)
        coef = gs[:, src] * alpha
        b = _segment_sum(ei.by_dst, coef[..., None] * Pr[:, src, :])
        r_next = np.tanh(params.get('zeta_r', k) * Pr + params.get('zeta_b', k) * b)

        if not (np.all(np.isfinite(s_next)) and np.all(np.isfinite(r_next))):
            raise ModelError('non-finite values in layer {}'.format(k))
        layers.append(LayerTrace(Ps=Ps, gate=gate, a=a, sig=sig, Pr=Pr, e=e, alpha=alpha, h1=h1, h2=h2, u=u, gs=gs,
                                 coef=coef, b=b))
        s, r = s_next, r_next
        s_list.append(s)
        r_list.append(r)

    n_hat = np.array([math.fsum(row) for row in s])
    return ForwardTrace(cascade_ids=tuple(c.id for c in cascades), seed_mask=seed, s=s_list, r=r_list, layers=layers,
                        n_hat=n_hat, edges=ei)


def forward(g, params, cascade, r0, exact_order=False):
    """
    Forward pass for one cascade
    :returns (ForwardTrace, predicted popularity)
    """
    trace = forward_batch(g, params, [cascade], r0, exact_order=exact_order)
    return trace, float(trace.n_hat[0])


def predict(g, params, cascades, r0, batch_size=64):
    """
    Predicted popularity of many cascades, computed in batches
    """
    out = []
    for start in range(0, len(cascades), batch_size):
        out.append(forward_batch(g, params, cascades[start:start + batch_size], r0).n_hat)
    return np.concatenate(out) if out else np.zeros(0)


@dataclasses.dataclass(frozen=True)
class LossBreakdown:
    total: float
    mrse: float
    user: float
    l2: float
    eta: float
    lam: float


def _targets(trace, cascades, n_nodes):
    if trace is None:
        raise ModelError('missing forward trace')
    if tuple(c.id for c in cascades) != trace.cascade_ids:
        raise ModelError('forward trace was computed for a different batch')
    n_true = np.array([c.final_size for c in cascades], dtype=np.float64)
    if np.any(n_true < 1):
        raise ModelError('final size must be >= 1')
    y = np.zeros((len(cascades), n_nodes))
    for i, c in enumerate(cascades):
        y[i, c.final_index] = 1.0
    return n_true, y


def l2_norm_sq(params):
    return float(sum(np.sum(t * t) for t in params.tensors.values()))


def loss(trace, cascades, params, eta, lam):
    """
    MRSE of the predicted popularity plus eta times the squared L2 norm of all parameters plus lam times the
    user-level binary cross entropy between final states and true final activations
    :param trace: ForwardTrace of the batch
    :param cascades: the cascades of the batch, in trace order
    :param params: ModelParams
    :param eta: L2 coefficient
    :param lam: cross-entropy coefficient
    :returns LossBreakdown
    """
    n_true, y = _targets(trace, cascades, params.n_nodes)
    rel = (trace.n_hat - n_true) / n_true
    mrse = float(np.mean(rel ** 2))
    prob = np.clip(trace.s[-1], PROB_CLIP, 1.0 - PROB_CLIP)
    user = float(-np.mean(np.mean(y * np.log(prob) + (1.0 - y) * np.log(1.0 - prob), axis=1)))
    l2 = l2_norm_sq(params)
    return LossBreakdown(total=mrse + eta * l2 + lam * user, mrse=mrse, user=user, l2=l2, eta=eta, lam=lam)


def _weight_grad(dP, x):
    """gradient of P = x @ W.T with respect to W, x possibly shared across the batch"""
    if x.shape[0] == 1 and dP.shape[0] > 1:
        dP = dP.sum(axis=0, keepdims=True)
    return dP.reshape(-1, dP.shape[-1]).T @ x.reshape(-1, x.shape[-1])


def _pair_grad(d1, d2, P):
    """gradient of v in d1 . (P v[:o]) + d2 . (P v[o:])"""
    return np.concatenate([np.sum(d1[..., None] * P, axis=(0, 1)), np.sum(d2[..., None] * P, axis=(0, 1))])


def gradients(trace, cascades, params, eta, lam):
    """
    Exact gradient of LossBreakdown.total with respect to every tensor of params
    :returns dict of tensor name to gradient, in the declaration order of params
    """
    n_true, y = _targets(trace, cascades, params.n_nodes)
    if len(trace.layers) != params.K:
        raise ModelError('forward trace has {} layers, parameters have {}'.format(len(trace.layers), params.K))
    ei = trace.edges
    src, dst = ei.src, ei.dst
    m = trace.batch_size
    free = ~trace.seed_mask
    grads = {name: np.zeros_like(t) for name, t in params.tensors.items()}

    # output pooling, MRSE and cross entropy
    s_out = trace.s[-1]
    ds = np.repeat((2.0 / m * (trace.n_hat - n_true) / n_true ** 2)[:, None], params.n_nodes, axis=1)
    if lam:
        prob = np.clip(s_out, PROB_CLIP, 1.0 - PROB_CLIP)
        inside = (s_out > PROB_CLIP) & (s_out < 1.0 - PROB_CLIP)
        ds = ds - lam / (m * params.n_nodes) * (y / prob - (1.0 - y) / (1.0 - prob)) * inside
    dr = None

    for k in reversed(range(params.K)):
        lt = trace.layers[k]
        s, r = trace.s[k], trace.r[k]
        o = params.dims[k + 1]
        beta, gamma = params.get('beta', k), params.get('gamma', k)
        ds_prev = np.zeros_like(ds)
        dPr = None

        if dr is not None:
            r_next = trace.r[k + 1]
            dt = dr * (1.0 - r_next ** 2)
            grads['zeta_r.{}'.format(k)] = np.asarray(np.sum(dt * lt.Pr))
            grads['zeta_b.{}'.format(k)] = np.asarray(np.sum(dt * lt.b))
            dPr = params.get('zeta_r', k) * dt
            dmsg = (params.get('zeta_b', k) * dt)[:, dst, :]
            dcoef = np.sum(dmsg * lt.Pr[:, src, :], axis=-1)
            dPr = dPr + _segment_sum(ei.by_src, lt.coef[..., None] * dmsg)
            dalpha = dcoef * lt.gs[:, src]
            dgs = _segment_sum(ei.by_src, dcoef * lt.alpha)
            inner = _segment_sum(ei.by_dst, lt.alpha * dalpha)
            de = lt.alpha * (dalpha - inner[:, dst])
            dc1 = _segment_sum(ei.by_src, de)
            dc2 = _segment_sum(ei.by_dst, de)
            dPr = dPr + dc1[..., None] * gamma[:o] + dc2[..., None] * gamma[o:]
            grads['gamma.{}'.format(k)] = _pair_grad(dc1, dc2, lt.Pr)

            # state gate
            du = dgs * expit(lt.u)
            grads['gate_w3.{}'.format(k)] = np.sum(du[..., None] * lt.h2, axis=(0, 1))
            grads['gate_b3.{}'.format(k)] = np.asarray(np.sum(du))
            dv2 = du[..., None] * params.get('gate_w3', k) * (1.0 - lt.h2 ** 2)
            grads['gate_W2.{}'.format(k)] = dv2.reshape(-1, GATE_HIDDEN).T @ lt.h1.reshape(-1, GATE_HIDDEN)
            grads['gate_b2.{}'.format(k)] = np.sum(dv2, axis=(0, 1))
            dv1 = (dv2 @ params.get('gate_W2', k)) * (1.0 - lt.h1 ** 2)
            grads['gate_w1.{}'.format(k)] = np.sum(dv1 * s[..., None], axis=(0, 1))
            grads['gate_b1.{}'.format(k)] = np.sum(dv1, axis=(0, 1))
            ds_prev = ds_prev + dv1 @ params.get('gate_w1', k)

        # state network; clamped users pass no gradient
        dz = ds * lt.sig * (1.0 - lt.sig) * free
        grads['mu_s.{}'.format(k)] = np.asarray(np.sum(dz * s))
        grads['mu_a.{}'.format(k)] = np.asarray(np.sum(dz * lt.a))
        ds_prev = ds_prev + params.get('mu_s', k) * dz
        da = params.get('mu_a', k) * dz
        grads['p'] = grads['p'] + da.sum(axis=0)
        dterm = da[:, dst]
        ds_prev = ds_prev + _segment_sum(ei.by_src, dterm * lt.gate)
        dgate = dterm * s[:, src]
        dq1 = _segment_sum(ei.by_src, dgate)
        dq2 = _segment_sum(ei.by_dst, dgate)
        dPs = dq1[..., None] * beta[:o] + dq2[..., None] * beta[o:]
        grads['beta.{}'.format(k)] = _pair_grad(dq1, dq2, lt.Ps)

        dr_prev = None
        if dPr is not None and params.share_w:
            dPs = dPs + dPr
        elif dPr is not None:
            grads['W_r.{}'.format(k)] = _weight_grad(dPr, r)
            if k > 0:
                dr_prev = dPr @ params.get('W_r', k)
        grads['W_s.{}'.format(k)] = _weight_grad(dPs, r)
        if k > 0:
            dr_prev = dPs @ params.get('W_s', k) if dr_prev is None else dr_prev + dPs @ params.get('W_s', k)

        ds, dr = ds_prev, dr_prev

    if eta:
        for name, t in params.tensors.items():
            grads[name] = grads[name] + 2.0 * eta * t
    return grads
