"""A small tape-based reverse-mode differentiator over numpy arrays.

Only the operations the fusion networks and their losses need are provided.
Forward code is written once against a :class:`Tape`; with ``record=False``
the same code runs as plain inference and nothing is retained.

    tape = Tape()
    w = tape.leaf(kernel)          # gradients keyed by the array object
    y = tape.conv(tape.const(x), w)
    loss = tape.mean(tape.mul(y, y))
    tape.backward(loss)
    tape.grad(kernel)
"""
import numpy as np

from . import _backend
from . import tensor as T


class Var:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad=False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"


def _unbroadcast(grad, shape):
    if np.shape(grad) == tuple(shape):
        return grad
    ndim_extra = np.ndim(grad) - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Records operations for reverse mode.

    ``probe=True`` additionally collects, in ``self.kinks``, the branch pattern
    of every non-smooth op (threshold clamp/sign, absolute values). Two runs
    whose patterns agree lie on the same smooth piece of the loss.
    """

    def __init__(self, record=True, probe=False):
        self.record = record
        self.kinks = [] if probe else None
        self._ops = []
        self._leaves = {}

    # -- graph bookkeeping -------------------------------------------------

    def leaf(self, array):
        """Wrap a parameter array; repeated calls with the same array share one node."""
        key = id(array)
        hit = self._leaves.get(key)
        if hit is not None:
            return hit[1]
        var = Var(array, requires_grad=self.record)
        self._leaves[key] = (array, var)
        return var

    def const(self, array):
        return array if isinstance(array, Var) else Var(array)

    def grad(self, array):
        """Accumulated gradient for a leaf array (zeros if it never received one)."""
        hit = self._leaves.get(id(array))
        if hit is None or hit[1].grad is None:
            return np.zeros_like(array)
        return hit[1].grad

    def _emit(self, value, inputs, backward):
        needs = self.record and any(v.requires_grad for v in inputs)
        out = Var(value, requires_grad=needs)
        if needs:
            self._ops.append((out, inputs, backward))
        return out

    def backward(self, loss):
        if np.size(loss.value) != 1:
            raise T.ContractError("backward() needs a scalar loss")
        loss.grad = np.ones_like(loss.value)
        for out, inputs, backward in reversed(self._ops):
            if out.grad is None:
                continue
            grads = backward(out.grad)
            for var, g in zip(inputs, grads):
                if g is None or not var.requires_grad:
                    continue
                var.grad = g if var.grad is None else var.grad + g

    # -- elementwise -------------------------------------------------------

    def add(self, a, b):
        sa, sb = a.shape, b.shape
        return self._emit(a.value + b.value, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b):
        sa, sb = a.shape, b.shape
        return self._emit(a.value - b.value, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))

    def mul(self, a, b):
        av, bv = a.value, b.value
        return self._emit(av * bv, (a, b),
                          lambda g: (_unbroadcast(g * bv, np.shape(av)), _unbroadcast(g * av, np.shape(bv))))

    def div(self, a, b):
        av, bv = a.value, b.value
        out = av / bv
        return self._emit(out, (a, b),
                          lambda g: (_unbroadcast(g / bv, np.shape(av)),
                                     _unbroadcast(-g * out / bv, np.shape(bv))))

    def neg(self, a):
        return self._emit(-a.value, (a,), lambda g: (-g,))

    def scale(self, a, c):
        return self._emit(c * a.value, (a,), lambda g: (c * g,))

    def softplus(self, a):
        av = a.value
        return self._emit(np.logaddexp(0.0, av), (a,),
                          lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * av)),))

    # -- structured ops ----------------------------------------------------

    def conv(self, x, w):
        xv, wv = x.value, w.value

        def back(g):
            gx = T.conv2d_grad_input(g, wv) if x.requires_grad else None
            gw = T.conv2d_grad_weights(xv, g, wv.shape) if w.requires_grad else None
            return gx, gw

        return self._emit(T.conv2d_same(xv, wv), (x, w), back)

    def threshold(self, x, theta, alpha=0.1, gamma=100.0):
        """Sigmoidal threshold with a learnable scalar ``theta`` (a 0-d Var)."""
        xv, tv = x.value, float(theta.value)
        kernels = _backend.kernels

        def back(g):
            gx, dt = kernels.threshold_backward(xv, g, tv, alpha, gamma)
            return gx, np.asarray(dt)

        if self.kinks is not None:
            self.kinks.append(np.sign(xv).astype(np.int8) * (gamma * (np.abs(xv) - tv) >= -30.0))
        return self._emit(kernels.threshold_forward(xv, tv, alpha, gamma), (x, theta), back)

    def concat(self, a, b):
        ca = a.shape[-1]
        return self._emit(T.channel_concat(a.value, b.value), (a, b),
                          lambda g: (g[..., :ca], g[..., ca:]))

    def sobel(self, x):
        xv = x.value
        if self.kinks is not None:
            self.kinks.append(np.sign(T.sobel_components(xv)).astype(np.int8))
        return self._emit(T.sobel_gradient(xv), (x,),
                          lambda g: (T.sobel_gradient_backward(xv, g),))

    def mean(self, a):
        n = np.size(a.value)
        shape = a.shape
        return self._emit(np.mean(a.value), (a,),
                          lambda g: (np.full(shape, g / n),))

    def mean_abs_diff(self, a, b):
        """mean |a - b| with subgradient 0 where a == b."""
        d = a.value - b.value
        n = d.size
        if self.kinks is not None:
            self.kinks.append(np.sign(d).astype(np.int8))

        def back(g):
            s = np.sign(d) * (g / n)
            return s, -s

        return self._emit(np.mean(np.abs(d)), (a, b), back)

    def custom(self, value, inputs, backward):
        """Register an op computed elsewhere; ``backward(g)`` returns one gradient per input."""
        return self._emit(value, tuple(inputs), backward)
