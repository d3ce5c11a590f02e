"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient. Outside a tape nothing is recorded, which
is how sampling and evaluation run.

>>> w = Tensor(np.ones(3), requires_grad=True)
>>> with Tape() as tape:
...     loss = (w * w).sum()
>>> tape.backward(loss)
>>> w.grad
array([2., 2., 2.])
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractViolation, NumericalError, ShapeError

_state = threading.local()


def _active_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class Tape:
    """Records forward operations in execution (hence topological) order."""

    def __init__(self):
        self.records: list[tuple["Tensor", tuple["Tensor", ...], Callable]] = []

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def record(self, out, inputs, backward_fn):
        self.records.append((out, inputs, backward_fn))

    def backward(self, loss: "Tensor", params=None):
        """Propagate d(loss)/d(.) to every recorded leaf with ``requires_grad``.

        Leaf gradients are accumulated into ``.grad``. When ``params`` (a
        ParameterSet) is given, returns ``{name: gradient}`` with zeros for
        parameters the loss does not reach.
        """
        if loss.data.size != 1:
            raise ContractViolation(f"loss must be scalar, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {id(loss): loss}
        for out, inputs, fn in reversed(self.records):
            g = grads.pop(id(out), None)
            leaves.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                    leaves[key] = inp
        for key, g in grads.items():
            t = leaves[key]
            if t.requires_grad:
                t.grad = g.copy() if t.grad is None else t.grad + g
        if params is not None:
            return {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}
        return None


def no_record():
    """Context manager that suspends recording (an empty tape stack frame)."""
    return _Pause()


class _Pause:
    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        self._saved = _state.stack
        _state.stack = []

    def __exit__(self, *exc):
        _state.stack = self._saved
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(name, data, inputs, backward_fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite values produced by {name}")
    req = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=req)
    if req:
        tape = _active_tape()
        if tape is not None:
            tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _emit("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _emit("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _emit("relu", a.data * mask, (a,), lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _emit("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    return _emit("log", y, (a,), lambda g: (g / a.data,))


def log_sigmoid(a) -> Tensor:
    """``log(sigmoid(x))`` computed without overflow."""
    a = as_tensor(a)
    y = -np.logaddexp(0.0, -a.data)
    return _emit("log_sigmoid", y, (a,), lambda g: (g * _sigmoid(-a.data),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _emit("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# -- linear algebra & shape ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _emit("matmul", a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _emit("concat", data, ts, back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _emit("reshape", data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _emit("transpose", a.data.T, (a,), lambda g: (g.T,))


def index(a, idx) -> Tensor:
    """``a[idx]`` for basic or integer-array indices (gather)."""
    a = as_tensor(a)
    data = a.data[idx]

    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("index", np.array(data, dtype=np.float64), (a,), back)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", data, (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / float(count))


# -- normalizations ----------------------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", y, (a,), back)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", y, (a,), back)


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    s = np.exp(a.data - m).sum(axis=axis, keepdims=True)
    y = (m + np.log(s)).squeeze(axis)
    p = np.exp(a.data - m) / s

    def back(g):
        return (np.expand_dims(g, axis) * p,)

    return _emit("logsumexp", y, (a,), back)


# -- segment (scatter) operations --------------------------------------------------------

def segment_sum(a, segment_ids, num_segments: int) -> Tensor:
    """Row ``s`` of the result is the sum of rows of ``a`` with ``segment_ids == s``."""
    a = as_tensor(a)
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.shape[0] != a.shape[0]:
        raise ShapeError(f"segment_sum: {ids.shape[0]} ids for {a.shape[0]} rows")
    out = np.zeros((num_segments,) + a.shape[1:])
    if ids.size:
        if ids.min() < 0 or ids.max() >= num_segments:
            raise IndexError(f"segment id out of range [0, {num_segments})")
        np.add.at(out, ids, a.data)
    return _emit("segment_sum", out, (a,), lambda g: (g[ids],))


def segment_softmax(a, segment_ids, num_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each segment."""
    a = as_tensor(a)
    if a.ndim != 1:
        raise ShapeError(f"segment_softmax expects a vector, got {a.shape}")
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.shape[0] != a.shape[0]:
        raise ShapeError(f"segment_softmax: {ids.shape[0]} ids for {a.shape[0]} scores")
    if ids.size == 0:
        return _emit("segment_softmax", np.zeros(0), (a,), lambda g: (g,))
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, ids, a.data)
    e = np.exp(a.data - seg_max[ids])
    denom = np.zeros(num_segments)
    np.add.at(denom, ids, e)
    y = e / denom[ids]

    def back(g):
        dot = np.zeros(num_segments)
        np.add.at(dot, ids, g * y)
        return (y * (g - dot[ids]),)

    return _emit("segment_softmax", y, (a,), back)
