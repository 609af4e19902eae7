"""Tiny reverse-mode autodiff over numpy arrays.

The training code only ever differentiates a fixed set of small
computation graphs (MLP forward passes, norms, hinge/NLL losses, and a
hand-assembled critic input-gradient expression), so this implements
exactly those ops and nothing else. Everything is float64.

A `Var` wraps an ndarray and remembers how it was produced. Ops accept
either `Var` or plain arrays; plain arrays are treated as constants and
receive no gradient. Call `backward(loss)` on a scalar `Var` to fill
`.grad` on every upstream `Var`.
"""
from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("data", "grad", "_parents", "_bwd")

    def __init__(self, data, parents=(), bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._bwd = bwd

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape})"


def val(x):
    return x.data if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _acc(x, g):
    if isinstance(x, Var):
        x.grad = g if x.grad is None else x.grad + g


def _parents(*xs):
    return tuple(x for x in xs if isinstance(x, Var))


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (undo numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def affine(x, w, b):
    """x @ w + b, the MLP layer primitive."""
    xd, wd, bd = val(x), val(w), val(b)
    out = xd @ wd + bd

    def bwd(g):
        _acc(x, g @ wd.T)
        _acc(w, xd.T @ g)
        _acc(b, g.sum(axis=0))
    return Var(out, _parents(x, w, b), bwd)


def matmul(a, b):
    ad, bd = val(a), val(b)

    def bwd(g):
        _acc(a, g @ bd.T)
        _acc(b, ad.T @ g)
    return Var(ad @ bd, _parents(a, b), bwd)


def add(a, b):
    ad, bd = val(a), val(b)

    def bwd(g):
        _acc(a, _unbroadcast(g, ad.shape))
        _acc(b, _unbroadcast(g, bd.shape))
    return Var(ad + bd, _parents(a, b), bwd)


def sub(a, b):
    ad, bd = val(a), val(b)

    def bwd(g):
        _acc(a, _unbroadcast(g, ad.shape))
        _acc(b, _unbroadcast(-g, bd.shape))
    return Var(ad - bd, _parents(a, b), bwd)


def mul(a, b):
    ad, bd = val(a), val(b)

    def bwd(g):
        _acc(a, _unbroadcast(g * bd, ad.shape))
        _acc(b, _unbroadcast(g * ad, bd.shape))
    return Var(ad * bd, _parents(a, b), bwd)


def scale(x, k):
    """x * k for a python scalar k."""
    xd = val(x)
    k = float(k)

    def bwd(g):
        _acc(x, g * k)
    return Var(xd * k, _parents(x), bwd)


def neg(x):
    return scale(x, -1.0)


def relu(x):
    xd = val(x)
    mask = xd > 0.0

    def bwd(g):
        _acc(x, g * mask)
    return Var(xd * mask, _parents(x), bwd)


def tanh(x):
    out = np.tanh(val(x))

    def bwd(g):
        _acc(x, g * (1.0 - out * out))
    return Var(out, _parents(x), bwd)


def swish(x):
    """x * sigmoid(x)."""
    xd = val(x)
    sig = 1.0 / (1.0 + np.exp(-xd))
    out = xd * sig

    def bwd(g):
        _acc(x, g * (sig + out * (1.0 - sig)))
    return Var(out, _parents(x), bwd)


def square(x):
    xd = val(x)

    def bwd(g):
        _acc(x, g * 2.0 * xd)
    return Var(xd * xd, _parents(x), bwd)


def minimum(a, b):
    """Elementwise min; on ties the gradient goes to the first arg."""
    ad, bd = val(a), val(b)
    take_a = ad <= bd

    def bwd(g):
        _acc(a, _unbroadcast(g * take_a, ad.shape))
        _acc(b, _unbroadcast(g * (~take_a), bd.shape))
    return Var(np.where(take_a, ad, bd), _parents(a, b), bwd)


def clip(x, lo, hi):
    """Hard clamp; gradient is zero outside [lo, hi]."""
    xd = val(x)
    inside = (xd >= lo) & (xd <= hi)

    def bwd(g):
        _acc(x, g * inside)
    return Var(np.clip(xd, lo, hi), _parents(x), bwd)


def concat_cols(parts):
    datas = [val(p) for p in parts]
    widths = [d.shape[1] for d in datas]
    offs = np.cumsum([0] + widths)

    def bwd(g):
        for p, i0, i1 in zip(parts, offs[:-1], offs[1:]):
            _acc(p, g[:, i0:i1])
    return Var(np.concatenate(datas, axis=1), _parents(*parts), bwd)


def slice_cols(x, i0, i1):
    xd = val(x)

    def bwd(g):
        full = np.zeros_like(xd)
        full[:, i0:i1] = g
        _acc(x, full)
    return Var(xd[:, i0:i1], _parents(x), bwd)


def transpose(x):
    xd = val(x)

    def bwd(g):
        _acc(x, g.T)
    return Var(xd.T, _parents(x), bwd)


def reshape(x, shape):
    xd = val(x)

    def bwd(g):
        _acc(x, g.reshape(xd.shape))
    return Var(xd.reshape(shape), _parents(x), bwd)


def rownorm(x, eps=1e-12):
    """Per-row L2 norm, shape (B, 1). Safe gradient at zero rows."""
    xd = val(x)
    n = np.sqrt(np.sum(xd * xd, axis=1, keepdims=True))

    def bwd(g):
        _acc(x, g * xd / np.maximum(n, eps))
    return Var(n, _parents(x), bwd)


def sum_all(x):
    xd = val(x)

    def bwd(g):
        _acc(x, np.full_like(xd, float(g)))
    return Var(xd.sum(), _parents(x), bwd)


def mean_all(x):
    xd = val(x)
    k = 1.0 / xd.size

    def bwd(g):
        _acc(x, np.full_like(xd, float(g) * k))
    return Var(xd.mean(), _parents(x), bwd)


def gaussian_nll(mean, logvar, target):
    """Per-element Gaussian negative log likelihood of `target` (constant).

    0.5 * (logvar + (target - mean)^2 / exp(logvar) + log(2*pi))
    """
    md, lv = val(mean), val(logvar)
    t = np.asarray(target, dtype=np.float64)
    inv_var = np.exp(-lv)
    diff = md - t
    out = 0.5 * (lv + diff * diff * inv_var + np.log(2.0 * np.pi))

    def bwd(g):
        _acc(mean, g * diff * inv_var)
        _acc(logvar, g * 0.5 * (1.0 - diff * diff * inv_var))
    return Var(out, _parents(mean, logvar), bwd)


def backward(root):
    """Reverse pass from a scalar Var; fills .grad on reachable Vars."""
    if root.data.ndim != 0 and root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.data.shape}")
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
