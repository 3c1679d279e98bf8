"""Small reverse-mode autodiff engine over numpy arrays.

Only the operations needed by the recommenders and the attacks are provided.
Every op validates shapes, refuses non-finite results and records a closure
that maps the output gradient to gradients of its inputs.
"""
from __future__ import annotations

import contextlib
import math
import threading

import numpy as np


class ShapeError(ValueError):
    """Raised when operands violate an op's shape contract."""


class NumericError(FloatingPointError):
    def __init__(self, op: str):
        super().__init__(f"non-finite values produced by op '{op}'")
        self.op = op


class _State(threading.local):
    # per thread, so concurrent read-only inference can toggle no_grad safely
    dtype = np.float32
    grad = True


_state = _State()
_MASK_FILL = -1e9


def default_dtype():
    return _state.dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the float type used for new tensors (e.g. np.float64 for grad checks)."""
    prev = _state.dtype
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = prev


@contextlib.contextmanager
def no_grad():
    prev = _state.grad
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        self.data = np.array(data, dtype=dtype or _state.dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = None
        self._backward = None
        self._op = None

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

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf requiring grad."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(_toposort(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents or ():
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _t(x, like=None):
    """Wrap constants; a constant paired with a tensor takes that tensor's float type."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.data.dtype if isinstance(like, Tensor) else None)


def _result(data, parents, backward, op):
    if not np.isfinite(data).all():
        raise NumericError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._op = op
    if _state.grad and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = None
        out._backward = None
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = _t(a, b), _t(b, a)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _t(a, b), _t(b, a)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = _t(a, b), _t(b, a)
    _check_broadcast(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = _t(a, b), _t(b, a)
    _check_broadcast(a, b, "div")

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data / b.data, (a, b), bw, "div")


def exp(x):
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _result(out, (x,), lambda g: (g / x.data,), "log")


def sigmoid(x):
    out = 1.0 / (1.0 + np.exp(-x.data))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x):
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(x):
    """max(0, x); the hinge used by margin losses."""
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x):
    """Tanh approximation of GELU."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    th = np.tanh(inner)
    out = 0.5 * v * (1.0 + th)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v * v)
        return (g * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner),)

    return _result(out, (x,), bw, "gelu")


def dropout(x, p, rng, training=True):
    if not training or p <= 0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return mul(x, Tensor(keep, dtype=x.dtype))


# ---------------------------------------------------------------- shape ops


def sum_(x, axis=None, keepdims=False):
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out), (x,), bw, "sum")


def mean(x, axis=None, keepdims=False):
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / float(n))


def reshape(x, shape):
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    return _result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None):
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def _is_basic_index(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x, idx):
    basic = _is_basic_index(idx)

    def bw(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _result(np.array(x.data[idx]), (x,), bw, "getitem")


def concat(tensors, axis=-1):
    tensors = [_t(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(out, tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [_t(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mismatched shapes {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(out, tuple(tensors), bw, "stack")


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                a2 = a.data.reshape(-1, a.shape[-1])
                gb = a2.T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(out, (a, b), bw, "matmul")


def embedding(table, ids):
    """Row gather ``table[ids]`` for an integer id array of any shape."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ShapeError("embedding: ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: id out of range for table of {table.shape[0]} rows")

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(table.data[ids], (table,), bw, "embedding")


def take_along_last(x, idx):
    """out[..., j] = x[..., idx[..., j]]; ``idx`` shares x's leading shape."""
    idx = np.asarray(idx)
    if idx.shape[:-1] != x.shape[:-1]:
        raise ShapeError(f"take_along_last: index shape {idx.shape} vs data {x.shape}")
    out = np.take_along_axis(x.data, idx, axis=-1)

    def bw(g):
        c = x.shape[-1]
        gx = np.zeros((int(np.prod(x.shape[:-1], dtype=int)), c), dtype=x.dtype)
        rows = np.arange(gx.shape[0])[:, None]
        np.add.at(gx, (rows, idx.reshape(gx.shape[0], -1)), g.reshape(gx.shape[0], -1))
        return (gx.reshape(x.shape),)

    return _result(out, (x,), bw, "take_along_last")


# ---------------------------------------------------------------- normalisation


def softmax(x, mask=None):
    """Softmax over the last axis; ``mask`` (bool, broadcastable) marks admissible entries."""
    v = x.data if mask is None else np.where(mask, x.data, _MASK_FILL)
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    out = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result(out, (x,), bw, "softmax")


def log_softmax(x):
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def bw(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _result(out, (x,), bw, "log_softmax")


def layer_norm(x, gamma, beta, eps=1e-5):
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        g2 = g.reshape(-1, d)
        dgamma = (g2 * xhat.reshape(-1, d)).sum(axis=0)
        dbeta = g2.sum(axis=0)
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return _result(out, (x, gamma, beta), bw, "layer_norm")


# ---------------------------------------------------------------- composite kernels


def attention(q, k, v, mask=None):
    """Scaled dot-product attention over (..., T, d_head) operands.

    ``mask`` is boolean, broadcastable to (..., T_q, T_k); True means the key
    may be attended. Masked keys receive exactly zero weight.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: q{q.shape} k{k.shape} v{v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = (q.data @ np.swapaxes(k.data, -1, -2)) * scale
    if mask is not None:
        s = np.where(mask, s, _MASK_FILL)
    s = s - s.max(axis=-1, keepdims=True)
    p = np.exp(s)
    p = (p / p.sum(axis=-1, keepdims=True)).astype(q.dtype)
    out = p @ v.data

    def bw(g):
        gp = g @ np.swapaxes(v.data, -1, -2)
        gv = np.swapaxes(p, -1, -2) @ g
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scale
        gq = gs @ k.data
        gk = np.swapaxes(gs, -1, -2) @ q.data
        return gq, gk, gv

    return _result(out, (q, k, v), bw, "attention")


def causal_mask(t):
    return np.tril(np.ones((t, t), dtype=bool))


def gru_cell(gx, h, w_hh, b_hh):
    """One GRU step given the precomputed input projection ``gx = x W_ih^T + b_ih``.

    Gate layout along the last axis is (reset, update, candidate), as in cuDNN/PyTorch.
    """
    hd = h.shape[-1]
    if gx.shape[-1] != 3 * hd or w_hh.shape != (3 * hd, hd) or b_hh.shape != (3 * hd,):
        raise ShapeError(f"gru_cell: gx{gx.shape} h{h.shape} w_hh{w_hh.shape}")
    gh = h.data @ w_hh.data.T + b_hh.data
    r = 1.0 / (1.0 + np.exp(-(gx.data[..., :hd] + gh[..., :hd])))
    z = 1.0 / (1.0 + np.exp(-(gx.data[..., hd:2 * hd] + gh[..., hd:2 * hd])))
    n = np.tanh(gx.data[..., 2 * hd:] + r * gh[..., 2 * hd:])
    out = (1.0 - z) * n + z * h.data

    def bw(g):
        dn = g * (1.0 - z)
        dz = g * (h.data - n)
        dan = dn * (1.0 - n * n)
        dar = dan * gh[..., 2 * hd:] * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgx = np.concatenate([dar, daz, dan], axis=-1)
        dgh = np.concatenate([dar, daz, dan * r], axis=-1)
        dh = g * z + dgh @ w_hh.data
        dgh2 = dgh.reshape(-1, 3 * hd)
        dw = dgh2.T @ h.data.reshape(-1, hd)
        return dgx, dh, dw, dgh2.sum(axis=0)

    return _result(out, (gx, h, w_hh, b_hh), bw, "gru_cell")


def cross_entropy(logits, labels, ignore_index=None):
    """Mean next-item cross-entropy over logits (..., C) and integer labels (...)."""
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy: labels {labels.shape} vs logits {logits.shape}")
    c = logits.shape[-1]
    flat = logits.data.reshape(-1, c)
    lab = labels.reshape(-1)
    valid = np.ones(lab.shape, dtype=bool) if ignore_index is None else lab != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise ShapeError("cross_entropy: no labelled positions")
    safe = np.where(valid, lab, 0)
    if safe.min() < 0 or safe.max() >= c:
        raise ShapeError("cross_entropy: label out of range")
    shifted = flat - flat.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    nll = lse - shifted[np.arange(len(lab)), safe]
    out = np.asarray((nll * valid).sum() / count, dtype=logits.dtype)

    def bw(g):
        p = np.exp(shifted - lse[:, None])
        p[np.arange(len(lab)), safe] -= 1.0
        p *= (valid / count)[:, None] * g
        return (p.reshape(logits.shape).astype(logits.dtype),)

    return _result(out, (logits,), bw, "cross_entropy")
