"""Dense tensors with a reverse-mode tape.

Every primitive computes its forward value with numpy and records a
closure mapping the output gradient to one gradient per parent. Nothing
is recorded when no parent requires a gradient or inside ``no_grad()``.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100  # make ndarray (op) Tensor defer to Tensor

    def __init__(self, data, requires_grad=False, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): grad}
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
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name=None):
        super().__init__(np.array(data), requires_grad=True, name=name)


def as_tensor(x, like=None):
    """Wrap constants; ``like`` casts them to its dtype so float32 graphs stay float32."""
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if like is not None:
        arr = arr.astype(like.dtype, copy=False)
    return Tensor(arr)


def _pair(a, b):
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    a = as_tensor(a)
    return a, as_tensor(b, like=a)


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---- elementwise -------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from e

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), backward)


def mul(a, b):
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from e

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _make(out, (a, b), backward)


def relu(x):
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sum_(x, axis=None, keepdims=False):
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(out), (x,), backward)


def reshape(x, shape):
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    inv = np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


# ---- linear algebra ----------------------------------------------------

def matmul(a, b):
    """Batched ``a @ b``; leading batch dimensions broadcast."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), backward)


def linear(x, weight, bias=None):
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def softmax(x, axis=-1):
    """Softmax along ``axis``; -inf entries get exactly zero weight."""
    if x.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _make(y, (x,), backward)


def layer_norm(x, gamma=None, beta=None, eps=1e-5):
    """Normalize over the last axis, then apply the optional affine map."""
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    parents = (x,) + tuple(p for p in (gamma, beta) if p is not None)

    def backward(g):
        gxhat = g * gamma.data if gamma is not None else g
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * np.mean(gxhat * xhat, axis=-1, keepdims=True))
        grads = [gx]
        if gamma is not None:
            grads.append((g * xhat).reshape(-1, n).sum(axis=0).reshape(gamma.shape))
        if beta is not None:
            grads.append(g.reshape(-1, n).sum(axis=0).reshape(beta.shape))
        return grads

    return _make(out.astype(x.dtype, copy=False), parents, backward)


def conv1d(x, weight, bias=None):
    """Stride-1 'same' convolution over time.

    x: (B, T, C_in); weight: (K, C_in, C_out); bias: (C_out,).
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[2] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape}, weight {weight.shape}")
    B, T, C = x.shape
    K, _, C_out = weight.shape
    left = (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (left, K - 1 - left), (0, 0)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, T, axis=1)  # (B, K, C, T)
    cols = np.ascontiguousarray(cols.transpose(0, 3, 1, 2)).reshape(B, T, K * C)
    w2 = weight.data.reshape(K * C, C_out)
    out = cols @ w2
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) + ((bias,) if bias is not None else ())

    def backward(g):
        g2 = g.reshape(B * T, C_out)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2.T).reshape(B, T, K, C)
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[:, k:k + T] += gcols[:, :, k]
            gx = gxp[:, left:left + T]
        gw = (cols.reshape(B * T, K * C).T @ g2).reshape(weight.shape) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _make(out, parents, backward)


def embedding(ids, table):
    """Rows of ``table`` (V, D) at integer ``ids`` of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _make(out, (table,), backward)


def dropout(x, rate, rng=None, training=True):
    """Inverted dropout; identity when not training or at rate 0."""
    if not training or rate == 0:
        return x
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


def scaled_dot_attention(q, k, v, mask=None):
    """softmax(q kᵀ / sqrt(d) + mask) v over the last two axes.

    ``mask`` is additive and broadcast against the (..., Tq, Tk) scores;
    use -inf for positions that must receive zero weight.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    if k.shape[-2] == 0:
        raise ShapeError("attention over an empty key axis")
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = np.matmul(q.data, np.swapaxes(k.data, -1, -2)) * scale
    if mask is not None:
        s = s + mask
    s = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(s)
    p = (e / e.sum(axis=-1, keepdims=True)).astype(q.dtype, copy=False)
    out = np.matmul(p, v.data)

    def backward(g):
        gv = np.matmul(np.swapaxes(p, -1, -2), g)
        gp = np.matmul(g, np.swapaxes(v.data, -1, -2))
        gs = p * (gp - np.sum(gp * p, axis=-1, keepdims=True)) * scale
        gq = np.matmul(gs, k.data)
        gk = np.matmul(np.swapaxes(gs, -1, -2), q.data)
        return gq, gk, gv

    return _make(out, (q, k, v), backward)


# ---- losses ------------------------------------------------------------

def masked_mse(pred, target, mask):
    """Mean of (pred - target)² over positions where ``mask`` is true."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        mask = np.broadcast_to(mask, pred.shape)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("masked_mse: empty mask")
    target = np.asarray(target, dtype=pred.dtype)
    diff = np.where(mask, pred.data - target, 0).astype(pred.dtype)
    out = np.asarray(np.sum(diff * diff) / count, dtype=pred.dtype)
    return _make(out, (pred,), lambda g: (g * 2.0 * diff / count,))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under row-wise softmax."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape}, labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = labels.shape[0]
    out = np.asarray(-logp[np.arange(n), labels].mean(), dtype=logits.dtype)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return _make(out, (logits,), backward)
