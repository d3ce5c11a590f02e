"""Layer kinds shared by the generators and classifiers.

Each layer is a pair of functions: ``init_*`` registers named parameters in a
:class:`ParameterSet`, and the forward function reads them back by prefix.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import tensor as T
from .params import ParameterSet
from .tensor import Tensor


def init_affine(params: ParameterSet, prefix: str, in_dim: int, out_dim: int):
    params.glorot(f"{prefix}.w", (in_dim, out_dim))
    params.zeros(f"{prefix}.b", (out_dim,))


def affine(params: ParameterSet, x, prefix: str) -> Tensor:
    w = params[f"{prefix}.w"]
    x = T.as_tensor(x)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"{prefix}: input width {x.shape[-1]} != {w.shape[0]}")
    return T.matmul(x, w) + params[f"{prefix}.b"]


def init_mlp(params: ParameterSet, prefix: str, dims: list[int]):
    for i in range(len(dims) - 1):
        init_affine(params, f"{prefix}.{i}", dims[i], dims[i + 1])


def mlp(params: ParameterSet, x, prefix: str, depth: int) -> Tensor:
    """Affine layers with ReLU between them (none after the last)."""
    for i in range(depth):
        x = affine(params, x, f"{prefix}.{i}")
        if i < depth - 1:
            x = T.relu(x)
    return x


# -- gated recurrent unit -----------------------------------------------------------

def init_gru(params: ParameterSet, prefix: str, in_dim: int, hidden: int):
    params.glorot(f"{prefix}.w_x", (in_dim, 3 * hidden))
    params.glorot(f"{prefix}.w_h", (hidden, 3 * hidden))
    params.zeros(f"{prefix}.b_x", (3 * hidden,))
    params.zeros(f"{prefix}.b_h", (3 * hidden,))


def gru_cell(params: ParameterSet, h_prev, x, prefix: str = "gru") -> Tensor:
    """One GRU update; accepts single vectors or row batches.

    r = sig(x Wr + h Ur), z = sig(x Wz + h Uz), c = tanh(x Wc + r * (h Uc)),
    h' = (1 - z) * c + z * h
    """
    h_prev, x = T.as_tensor(h_prev), T.as_tensor(x)
    w_x, w_h = params[f"{prefix}.w_x"], params[f"{prefix}.w_h"]
    d = w_h.shape[0]
    vector = x.ndim == 1
    if vector:
        x = T.reshape(x, (1, -1))
        h_prev = T.reshape(h_prev, (1, -1))
    if x.shape[1] != w_x.shape[0] or h_prev.shape[1] != d or x.shape[0] != h_prev.shape[0]:
        raise ShapeError(f"{prefix}: x {x.shape} / h {h_prev.shape} do not fit weights {w_x.shape}")
    gx = T.matmul(x, w_x) + params[f"{prefix}.b_x"]
    gh = T.matmul(h_prev, w_h) + params[f"{prefix}.b_h"]
    r = T.sigmoid(gx[:, :d] + gh[:, :d])
    z = T.sigmoid(gx[:, d:2 * d] + gh[:, d:2 * d])
    c = T.tanh(gx[:, 2 * d:] + r * gh[:, 2 * d:])
    h = c + z * (h_prev - c)
    return T.reshape(h, (d,)) if vector else h


# -- attention message passing --------------------------------------------------------

def init_attention(params: ParameterSet, prefix: str, dim: int, att_dim: int | None = None):
    a = att_dim or dim
    params.glorot(f"{prefix}.w_q", (dim, a))
    params.glorot(f"{prefix}.w_k", (dim, a))
    params.glorot(f"{prefix}.w_type", (1, a))
    params.zeros(f"{prefix}.b_att", (a,))
    params.glorot(f"{prefix}.v", (a, 1))
    params.glorot(f"{prefix}.w_msg", (dim, dim))
    params.glorot(f"{prefix}.e_msg", (1, dim))
    params.zeros(f"{prefix}.b_msg", (dim,))


def attention_message_pass(params: ParameterSet, node_states, edges, edge_types=None,
                           prefix: str = "att", return_weights: bool = False):
    """One round of additive-attention message passing over undirected edges.

    Every edge carries messages both ways. For receiver i and sender j:
    ``e_ij = v . tanh(h_i Wq + h_j Wk + type_ij w_type + b)``, weights are the
    softmax of ``e_ij`` over i's senders, and
    ``h_i' = h_i + sum_j a_ij tanh(h_j Wm + type_ij e_msg + b_msg)``.
    Nodes without neighbors keep their state. ``edge_types`` is an optional
    0/1 flag per edge (1 marks a not-yet-decided candidate edge).
    """
    h = T.as_tensor(node_states)
    n = h.shape[0]
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise IndexError(f"edge endpoint outside [0, {n})")
    if len(e) == 0:
        out = h + T.Tensor(np.zeros(h.shape))
        return (out, np.zeros(0)) if return_weights else out
    types = np.zeros(len(e)) if edge_types is None else np.asarray(edge_types, dtype=np.float64)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    ty = T.Tensor(np.concatenate([types, types]).reshape(-1, 1))

    q = T.matmul(h, params[f"{prefix}.w_q"])
    k = T.matmul(h, params[f"{prefix}.w_k"])
    pre = q[dst] + k[src] + T.matmul(ty, params[f"{prefix}.w_type"]) + params[f"{prefix}.b_att"]
    score = T.reshape(T.matmul(T.tanh(pre), params[f"{prefix}.v"]), (-1,))
    alpha = T.segment_softmax(score, dst, n)
    msg = T.tanh(T.matmul(h[src], params[f"{prefix}.w_msg"])
                 + T.matmul(ty, params[f"{prefix}.e_msg"]) + params[f"{prefix}.b_msg"])
    agg = T.segment_sum(T.reshape(alpha, (-1, 1)) * msg, dst, n)
    out = h + agg
    return (out, alpha.data) if return_weights else out
