"""A small reverse-mode autodiff engine over dense numpy arrays.

Operations executed while a :class:`Tape` is active are recorded on it;
``tape.backward(loss)`` then walks the records in exact reverse order.
Only tensors that require gradients (or derive from one) are recorded.

Storage is float32 by default. ``precision(np.float64)`` switches newly
created tensors to float64, which the gradient checks use.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "precision",
    "get_dtype",
    "matmul",
    "add",
    "sub",
    "mul",
    "abs",
    "relu",
    "transpose",
    "reshape",
    "stack",
    "concat",
    "gather_rows",
    "scatter_mean",
    "sparse_mix",
    "sum_all",
    "mean_over_axis",
    "group_norm",
    "linear",
    "softmax_cross_entropy",
    "effective_groups",
]

_dtype = np.float32
_local = threading.local()


def get_dtype():
    return _dtype


@contextlib.contextmanager
def precision(dtype):
    global _dtype
    old = _dtype
    _dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _dtype = old


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "inputs", "grad_fn")

    def __init__(self, out, inputs, grad_fn):
        self.out = out
        self.inputs = inputs
        self.grad_fn = grad_fn


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tape:
    """Records differentiable operations. One tape per thread at a time."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def backward(self, loss, params=None):
        return backward(loss, self, params)


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(data, inputs, grad_fn, opname):
    if not np.isfinite(data).all():
        raise FloatingPointError(f"{opname} produced a non-finite value")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    tape = _active_tape()
    if needs and tape is not None:
        tape.nodes.append(_Node(out, inputs, grad_fn))
    return out


def backward(loss, tape, params=None):
    """Gradients of scalar ``loss`` with respect to ``params``.

    Returns a dict keyed by tensor. Parameters the loss does not depend on
    receive zeros. Each parameter's ``.grad`` is also set.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    keep = {id(loss): loss}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.grad_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            k = id(t)
            if k in grads:
                grads[k] = grads[k] + gi
            else:
                grads[k] = gi
                keep[k] = t
    if params is None:
        params = [t for k, t in keep.items() if k in grads and t is not loss]
    result = {}
    for p in params:
        g = grads.get(id(p))
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.data.dtype).reshape(p.shape)
        p.grad = g
        result[p] = g
    return result


# ---------------------------------------------------------------- elementwise

def add(a, b):
    """Elementwise sum. ``b`` may also be a 1-D bias matching ``a``'s last axis."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _finish(a.data + b.data, (a, b), lambda g: (g, g), "add")
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        axes = tuple(range(a.ndim - 1))
        return _finish(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=axes)), "add")
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _finish(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _finish(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def abs(x):  # noqa: A001 - mirrors numpy naming
    x = _as_tensor(x)
    sign = np.sign(x.data)
    return _finish(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0
    return _finish(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * mask,), "relu")


# ---------------------------------------------------------------- shape

def transpose(x, axes=None):
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _finish(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),), "transpose")


def reshape(x, shape):
    x = _as_tensor(x)
    old = x.shape
    return _finish(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def stack(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    if len({t.shape for t in tensors}) != 1:
        raise ShapeError(f"stack: shapes differ {[t.shape for t in tensors]}")
    data = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % data.ndim

    def grad_fn(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _finish(data, tuple(tensors), grad_fn, "stack")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _finish(data, tuple(tensors), grad_fn, "concat")


# ---------------------------------------------------------------- indexing

def gather_rows(x, index):
    """Rows ``x[index]`` of a 2-D tensor; index ``len(x)`` yields a zero row."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"gather_rows needs a 2-D tensor, got {x.shape}")
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    if index.size and (index.min() < 0 or index.max() > n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")
    padded = np.concatenate([x.data, np.zeros((1, x.shape[1]), dtype=x.data.dtype)])

    def grad_fn(g):
        # sparse scatter-add is far faster than np.add.at for repeated ids
        scatter = sp.csr_matrix(
            (np.ones(len(index), dtype=g.dtype), (index, np.arange(len(index)))),
            shape=(n + 1, len(index)),
        )
        return (np.asarray(scatter[:n] @ g.reshape(len(index), -1)).reshape((n,) + g.shape[1:]),)

    return _finish(padded[index], (x,), grad_fn, "gather_rows")


def scatter_mean(x, groups, n_groups=None):
    """Average the rows of ``x`` that share a group id. Returns ``(n_groups, C)``."""
    x = _as_tensor(x)
    groups = np.asarray(groups, dtype=np.int64)
    if x.ndim != 2 or len(groups) != x.shape[0]:
        raise ShapeError(f"scatter_mean: {len(groups)} group ids for tensor {x.shape}")
    if n_groups is None:
        n_groups = int(groups.max()) + 1 if len(groups) else 0
    counts = np.bincount(groups, minlength=n_groups).astype(x.data.dtype)
    safe = np.maximum(counts, 1)[:, None]
    out = np.zeros((n_groups, x.shape[1]), dtype=x.data.dtype)
    np.add.at(out, groups, x.data)
    out /= safe

    def grad_fn(g):
        return ((g / safe)[groups],)

    return _finish(out, (x,), grad_fn, "scatter_mean")


def sparse_mix(x, matrix):
    """``x @ matrix`` for a constant scipy sparse ``matrix`` (columns are mixed)."""
    x = _as_tensor(x)
    matrix = sp.csr_matrix(matrix)
    if x.ndim != 2 or x.shape[1] != matrix.shape[0]:
        raise ShapeError(f"sparse_mix: tensor {x.shape} vs matrix {matrix.shape}")
    m = matrix.astype(x.data.dtype)
    mt = m.T.tocsr()
    out = np.asarray(mt @ x.data.T).T

    def grad_fn(g):
        return (np.asarray(m @ g.T).T,)

    return _finish(np.ascontiguousarray(out), (x,), grad_fn, "sparse_mix")


# ---------------------------------------------------------------- reductions / algebra

def sum_all(x):
    x = _as_tensor(x)
    return _finish(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean_over_axis(x, axis):
    x = _as_tensor(x)
    n = x.shape[axis]

    def grad_fn(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).astype(x.data.dtype),)

    return _finish(x.data.mean(axis=axis), (x,), grad_fn, "mean")


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def grad_fn(g):
        if b.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        return g @ b.data.T, a.data.T @ g

    return _finish(a.data @ b.data, (a, b), grad_fn, "matmul")


def linear(weight, x, bias=None):
    """``weight @ x + bias`` for a single input vector ``x``."""
    out = matmul(weight, x)
    return out if bias is None else add(out, bias)


def effective_groups(channels, groups):
    """Largest divisor of ``channels`` not exceeding ``groups``."""
    g = max(1, min(groups, channels))
    while channels % g:
        g -= 1
    return g


def group_norm(x, groups, gamma, beta, eps=1e-5):
    """Group normalisation of a ``(C, N)`` tensor over channel groups and all N columns."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 2:
        raise ShapeError(f"group_norm needs (C, N), got {x.shape}")
    c, n = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"group_norm: affine params must have shape ({c},)")
    g = effective_groups(c, groups)
    xg = x.data.reshape(g, -1)
    mu = xg.mean(axis=1, keepdims=True)
    var = xg.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(c, n)
    out = xhat * gamma.data[:, None] + beta.data[:, None]

    def grad_fn(gr):
        dgamma = (gr * xhat).sum(axis=1)
        dbeta = gr.sum(axis=1)
        dxhat = (gr * gamma.data[:, None]).reshape(g, -1)
        xh = xhat.reshape(g, -1)
        dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True) - xh * (dxhat * xh).mean(axis=1, keepdims=True))
        return dx.reshape(c, n), dgamma, dbeta

    return _finish(out.astype(x.data.dtype), (x, gamma, beta), grad_fn, "group_norm")


def softmax_cross_entropy(logits, target):
    """Cross-entropy of softmax(logits).

    ``logits`` of shape ``(K,)`` take an integer class; ``(K, N)`` take N
    integer targets and the loss is averaged over columns.
    """
    logits = _as_tensor(logits)
    z = logits.data
    single = z.ndim == 1
    if single:
        z = z[:, None]
    t = np.atleast_1d(np.asarray(target, dtype=np.int64))
    k, n = z.shape
    if t.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {t.shape} targets for logits {logits.shape}")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise ShapeError(f"target label out of range [0, {k})")
    zmax = z.max(axis=0, keepdims=True)
    shifted = z - zmax
    logsum = np.log(np.exp(shifted).sum(axis=0, keepdims=True))
    logp = shifted - logsum
    cols = np.arange(n)
    loss = -logp[t, cols].mean()

    def grad_fn(g):
        p = np.exp(logp)
        p[t, cols] -= 1.0
        p *= g / n
        return (p[:, 0] if single else p,)

    return _finish(np.asarray(loss, dtype=logits.data.dtype), (logits,), grad_fn, "softmax_cross_entropy")
