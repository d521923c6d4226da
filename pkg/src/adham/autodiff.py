"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and records the operations applied to it;
calling :meth:`Tensor.backward` on a scalar result fills the ``grad`` field of
every tensor that contributed to it. Only the handful of operations the
package needs are implemented, each with a numerically stable forward kernel
shared by the no-tape evaluation path: the module-level functions ``elu``,
``softplus``, ``softmax`` and ``layer_norm`` accept either plain arrays or
tensors and return the matching kind, so model code can be written once and
run with or without gradient tracking.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "elu", "softplus", "softmax", "layer_norm", "sigmoid", "log", "exp"]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` over the axes that broadcasting expanded from ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _acc(t: "Tensor", g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


class Tensor:
    """An ndarray with a gradient tape.

    ``data`` is held by reference (no copy) so optimizer updates written into
    the underlying array are visible to the code that created it.
    """

    __slots__ = ("data", "grad", "_parents", "_backward")

    # make numpy defer to the reflected operators when an ndarray is on the left
    __array_ufunc__ = None
    __array_priority__ = 1000.0

    def __init__(self, data, _parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = lambda: None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # ---- graph traversal ----

    def backward(self):
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar output, got shape {self.shape}")
        topo, seen, stack = [], set(), [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            node._backward()

    # ---- arithmetic ----

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data + other.data, (self, other))

            def bw():
                _acc(self, _unbroadcast(out.grad, self.data.shape))
                _acc(other, _unbroadcast(out.grad, other.data.shape))

        else:
            other = np.asarray(other, dtype=np.float64)
            out = Tensor(self.data + other, (self,))

            def bw():
                _acc(self, _unbroadcast(out.grad, self.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = Tensor(self.data * other.data, (self, other))

            def bw():
                _acc(self, _unbroadcast(out.grad * other.data, self.data.shape))
                _acc(other, _unbroadcast(out.grad * self.data, other.data.shape))

        else:
            other = np.asarray(other, dtype=np.float64)
            out = Tensor(self.data * other, (self,))

            def bw():
                _acc(self, _unbroadcast(out.grad * other, self.data.shape))

        out._backward = bw
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return self + (-other)
        return self + (-np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return (-self) + other

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; multiply by a reciprocal")
        return self * (1.0 / np.asarray(other, dtype=np.float64))

    def __matmul__(self, other):
        a = self
        b_t = isinstance(other, Tensor)
        b_data = other.data if b_t else np.asarray(other, dtype=np.float64)
        if a.data.ndim < 2 or b_data.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")
        out = Tensor(a.data @ b_data, (a, other) if b_t else (a,))

        def bw():
            _acc(a, _unbroadcast(out.grad @ b_data.swapaxes(-1, -2), a.data.shape))
            if b_t:
                _acc(other, _unbroadcast(a.data.swapaxes(-1, -2) @ out.grad, b_data.shape))

        out._backward = bw
        return out

    def __rmatmul__(self, other):
        a_data = np.asarray(other, dtype=np.float64)
        if a_data.ndim < 2 or self.data.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")
        out = Tensor(a_data @ self.data, (self,))

        def bw():
            _acc(self, _unbroadcast(a_data.swapaxes(-1, -2) @ out.grad, self.data.shape))

        out._backward = bw
        return out

    # ---- reductions ----

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _acc(self, np.broadcast_to(g, self.data.shape))

        out._backward = bw
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # ---- shape ops ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), (self,))

        def bw():
            _acc(self, out.grad.reshape(self.data.shape))

        out._backward = bw
        return out

    def transpose(self, axes=None):
        out = Tensor(self.data.transpose(axes), (self,))

        def bw():
            inv = np.argsort(axes) if axes is not None else None
            _acc(self, out.grad.transpose(inv))

        out._backward = bw
        return out

    @property
    def T(self):
        return self.transpose()

    # ---- elementwise nonlinearities ----

    def exp(self):
        out = Tensor(np.exp(self.data), (self,))

        def bw():
            _acc(self, out.grad * out.data)

        out._backward = bw
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))

        def bw():
            _acc(self, out.grad / self.data)

        out._backward = bw
        return out


# ---- stable kernels, shared by traced and plain-array paths ----


def _sigmoid(x):
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _elu(x):
    return np.where(x > 0.0, x, np.expm1(x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softmax(x, axis):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _layer_norm(x, scale, shift, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * scale + shift, xhat, inv


def log(x):
    """Natural log; accepts a Tensor or an ndarray."""
    return x.log() if isinstance(x, Tensor) else np.log(x)


def exp(x):
    """Exponential; accepts a Tensor or an ndarray."""
    return x.exp() if isinstance(x, Tensor) else np.exp(x)


def sigmoid(x):
    """Logistic function; accepts a Tensor or an ndarray."""
    if not isinstance(x, Tensor):
        return _sigmoid(x)
    out = Tensor(_sigmoid(x.data), (x,))

    def bw():
        _acc(x, out.grad * out.data * (1.0 - out.data))

    out._backward = bw
    return out


def elu(x):
    """Exponential linear unit (alpha = 1); accepts a Tensor or an ndarray."""
    if not isinstance(x, Tensor):
        return _elu(x)
    out = Tensor(_elu(x.data), (x,))

    def bw():
        _acc(x, out.grad * np.where(x.data > 0.0, 1.0, out.data + 1.0))

    out._backward = bw
    return out


def softplus(x):
    """log(1 + e^x), computed without overflow; accepts a Tensor or an ndarray."""
    if not isinstance(x, Tensor):
        return _softplus(x)
    out = Tensor(_softplus(x.data), (x,))

    def bw():
        _acc(x, out.grad * _sigmoid(x.data))

    out._backward = bw
    return out


def softmax(x, axis=-1):
    """Normalized exponential along ``axis``, shifted by the max for stability."""
    if not isinstance(x, Tensor):
        return _softmax(x, axis)
    out = Tensor(_softmax(x.data, axis), (x,))

    def bw():
        s = out.data
        g = out.grad
        _acc(x, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    out._backward = bw
    return out


def layer_norm(x, scale, shift, eps=1e-5):
    """Normalize the last axis to zero mean/unit variance, then scale and shift.

    Any of the three operands may be a Tensor; gradients flow only into the
    ones that are.
    """
    xs = [x, scale, shift]
    if not any(isinstance(v, Tensor) for v in xs):
        return _layer_norm(x, scale, shift, eps)[0]
    xd, sd, bd = (
        v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64) for v in xs
    )
    out_data, xhat, inv = _layer_norm(xd, sd, bd, eps)
    out = Tensor(out_data, tuple(v for v in xs if isinstance(v, Tensor)))

    def bw():
        g = out.grad
        if isinstance(scale, Tensor):
            _acc(scale, _unbroadcast(g * xhat, sd.shape))
        if isinstance(shift, Tensor):
            _acc(shift, _unbroadcast(g, bd.shape))
        if isinstance(x, Tensor):
            dxhat = g * sd
            dx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            _acc(x, dx)

    out._backward = bw
    return out
