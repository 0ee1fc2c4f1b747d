"""A small reverse-mode tape over numpy arrays.

Only the operations the model needs are provided. Each op records its
inputs and a vector-Jacobian product; :func:`backward` replays the tape in
reverse. Gradients are computed fresh on every call, so the same tape can
be differentiated repeatedly.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Var:
    __slots__ = ("value", "parents", "index", "name")

    def __init__(self, value, parents=(), index=-1, name=None):
        self.value = value
        self.parents = parents
        self.index = index
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)


class GradientTape:
    """Records operations on named parameters and accumulates a scalar loss."""

    def __init__(self, params=None):
        self.params = params if params is not None else {}
        self.nodes = []
        self._bound = {}
        self.loss = None

    def param(self, name):
        var = self._bound.get(name)
        if var is None:
            var = self._push(self.params[name], (), name=name)
            self._bound[name] = var
        return var

    def constant(self, value):
        return Var(np.asarray(value, dtype=np.float64))

    def _push(self, value, parents, name=None):
        var = Var(value, parents, len(self.nodes), name)
        self.nodes.append(var)
        return var

    def add_loss(self, var):
        self.loss = var if self.loss is None else self.add(self.loss, var)
        return self.loss

    def _out(self, value, parents):
        return self._push(value, tuple((p, f) for p, f in parents if p.index >= 0))

    def matmul(self, a, b):
        av, bv = a.value, b.value
        out = np.matmul(av, bv)

        def ga(g):
            return _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape)

        def gb(g):
            return _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape)

        return self._out(out, ((a, ga), (b, gb)))

    def add(self, a, b):
        av, bv = a.value, b.value
        return self._out(av + bv, ((a, lambda g: _unbroadcast(g, np.shape(av))),
                                   (b, lambda g: _unbroadcast(g, np.shape(bv)))))

    def mul(self, a, b):
        av, bv = a.value, b.value
        return self._out(av * bv, ((a, lambda g: _unbroadcast(g * bv, np.shape(av))),
                                   (b, lambda g: _unbroadcast(g * av, np.shape(bv)))))

    def scale(self, a, c):
        return self._out(a.value * c, ((a, lambda g: g * c),))

    def sum(self, a):
        shape = np.shape(a.value)
        return self._out(np.sum(a.value), ((a, lambda g: np.broadcast_to(g, shape).copy()),))

    def reshape(self, a, shape):
        old = a.value.shape
        return self._out(a.value.reshape(shape), ((a, lambda g: g.reshape(old)),))

    def transpose(self, a, axes):
        inv = np.argsort(axes)
        return self._out(np.transpose(a.value, axes), ((a, lambda g: np.transpose(g, inv)),))

    def take_rows(self, a, idx):
        idx = np.asarray(idx, dtype=np.int64)
        shape = a.value.shape

        def ga(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return out

        return self._out(a.value[idx], ((a, ga),))

    def concat(self, parts, axis=-1):
        values = [p.value for p in parts]
        sizes = np.cumsum([v.shape[axis] for v in values])[:-1]

        def make(i):
            return lambda g: np.split(g, sizes, axis=axis)[i]

        return self._out(np.concatenate(values, axis=axis),
                         tuple((p, make(i)) for i, p in enumerate(parts)))

    def gelu(self, a):
        x = a.value
        cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return self._out(x * cdf, ((a, lambda g: g * (cdf + x * pdf)),))

    def identity(self, a):
        return a

    def softmax(self, a):
        x = a.value
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        s = e / e.sum(axis=-1, keepdims=True)
        return self._out(s, ((a, lambda g: s * (g - (g * s).sum(axis=-1, keepdims=True))),))

    def cross_entropy(self, logits, target):
        """``-log softmax(logits)[target]`` for a 1-D logit vector."""
        z = logits.value
        m = z.max()
        lse = m + math.log(np.exp(z - m).sum())
        p = np.exp(z - lse)

        def gz(g):
            out = p.copy()
            out[target] -= 1.0
            return g * out

        return self._out(np.float64(lse - z[target]), ((logits, gz),))


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(tape, loss=None):
    """Gradients of ``loss`` (default: the tape's accumulated loss) for every parameter.

    Parameters that do not influence the loss receive zero gradients.
    """
    loss = tape.loss if loss is None else loss
    if loss is None:
        raise ValueError("tape holds no loss")
    grads = [None] * len(tape.nodes)
    grads[loss.index] = np.ones_like(loss.value, dtype=np.float64)
    for i in range(loss.index, -1, -1):
        g = grads[i]
        if g is None:
            continue
        for parent, vjp in tape.nodes[i].parents:
            contrib = vjp(g)
            j = parent.index
            grads[j] = contrib if grads[j] is None else grads[j] + contrib
    out = {}
    for name, value in tape.params.items():
        var = tape._bound.get(name)
        g = grads[var.index] if var is not None else None
        g = np.zeros_like(value, dtype=np.float64) if g is None else np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        out[name] = g
    return out
