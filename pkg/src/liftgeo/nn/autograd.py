"""Tape-free reverse-mode autodiff over numpy arrays.

Every op returns a :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. :func:`backward` walks the
graph in reverse topological order. Gradients are only computed for parents
whose ``requires_grad`` flag is set, so frozen networks cost one matmul per
layer less on the backward pass.
"""
from __future__ import annotations

import numpy as np

from ..errors import GraphNotRecorded, ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        if not isinstance(data, np.ndarray):
            # numpy scalars (reductions) keep their dtype; python numbers become float64
            data = np.asarray(data) if isinstance(data, np.generic) else np.asarray(data, dtype=float)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a, b):
    # constants take the tensor operand's dtype so float32 graphs stay float32
    if isinstance(a, Tensor):
        return a, as_tensor(b, dtype=a.dtype)
    return as_tensor(a, dtype=b.dtype), b


def add(a, b):
    a, b = _binary(a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _binary(a, b)

    def backward(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _binary(a, b)

    def backward(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _binary(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward)


def matmul(a, b):
    a, b = _binary(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul expects 2D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul shapes {a.shape} and {b.shape} do not align")

    def backward(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _make(a.data @ b.data, (a, b), backward)


def linear(x, W, b):
    """``x @ W + b`` as a single node."""
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"input width {x.shape[-1]} != layer input {W.shape[0]}")

    def backward(g):
        return (g @ W.data.T if x.requires_grad else None,
                x.data.T @ g if W.requires_grad else None,
                g.sum(axis=0) if b.requires_grad else None)

    return _make(x.data @ W.data + b.data, (x, W, b), backward)


def square(a):
    def backward(g):
        return (2.0 * g * a.data,)

    return _make(a.data * a.data, (a,), backward)


def sqrt(a):
    out = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), backward)


def log(a):
    def backward(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), backward)


def relu(a):
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _make(a.data * mask, (a,), backward)


def leaky_relu(a, slope=0.01):
    mask = a.data > 0

    def backward(g):
        return (np.where(mask, g, g * slope),)

    return _make(np.where(mask, a.data, a.data * slope), (a,), backward)


def sigmoid(a):
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), backward)


def clamp_min(a, lo):
    """``max(a, lo)``; the subgradient at ``a == lo`` is 0."""
    mask = a.data > lo

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, np.asarray(lo, dtype=a.dtype)), (a,), backward)


def clamp_max(a, hi):
    mask = a.data < hi

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, np.asarray(hi, dtype=a.dtype)), (a,), backward)


def sum_(a, axis=None, keepdims=False):
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    old = a.shape

    def backward(g):
        return (g.reshape(old),)

    return _make(a.data.reshape(shape), (a,), backward)


def _is_basic(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)


def getitem(a, index):
    basic = _is_basic(index)

    def backward(g):
        out = np.zeros_like(a.data)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(a.data[index], (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, tensors))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, tensors))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def rotate(pose, R):
    """Apply constant per-sample rotations ``R (B, 3, 3)`` to ``pose (B, J, 3)``."""
    R = np.asarray(R, dtype=pose.dtype)

    def backward(g):
        return (np.einsum("bij,bki->bkj", R, g),)

    return _make(np.einsum("bij,bkj->bki", R, pose.data), (pose,), backward)


def batchnorm(x, gamma, beta, mean_, var, eps):
    """Normalize with the given statistics.

    When ``mean_``/``var`` are None the batch statistics are used and
    differentiated through; otherwise they are treated as constants.
    """
    if mean_ is None:
        mu = x.data.mean(axis=0)
        var_b = x.data.var(axis=0)
        inv = 1.0 / np.sqrt(var_b + eps)
        xhat = (x.data - mu) * inv
        n = x.shape[0]

        def backward(g):
            gx = gg = gb = None
            if gamma.requires_grad:
                gg = (g * xhat).sum(axis=0)
            if beta.requires_grad:
                gb = g.sum(axis=0)
            if x.requires_grad:
                dxhat = g * gamma.data
                gx = (inv / n) * (n * dxhat - dxhat.sum(axis=0)
                                  - xhat * (dxhat * xhat).sum(axis=0))
            return gx, gg, gb
    else:
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean_) * inv

        def backward(g):
            return (g * gamma.data * inv if x.requires_grad else None,
                    (g * xhat).sum(axis=0) if gamma.requires_grad else None,
                    g.sum(axis=0) if beta.requires_grad else None)

    out = (xhat * gamma.data + beta.data).astype(x.dtype, copy=False)
    return _make(out, (x, gamma, beta), backward)


def backward(loss, grad=None):
    """Accumulate ``d loss / d leaf`` into ``leaf.grad`` for every reachable leaf."""
    if not isinstance(loss, Tensor) or not loss.requires_grad:
        raise GraphNotRecorded("loss does not depend on any tensor requiring gradients")
    if grad is None:
        if loss.data.size != 1:
            raise GraphNotRecorded("backward() without an explicit gradient needs a scalar loss")
        grad = np.ones_like(loss.data)

    order = []
    seen = set()
    stack_ = [(loss, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))

    grads = {id(loss): grad}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            grads[key] = pg if key not in grads else grads[key] + pg
