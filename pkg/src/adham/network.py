"""Feed-forward networks and the Adam optimizer.

The one architecture used throughout the package is a stack of
[linear -> layer norm -> ELU -> dropout] blocks followed by a linear head,
with an optional positivity (softplus) or normalizing (softmax) output
transform. Parameters live in plain float64 arrays; wrapping them in
autodiff tensors for a training step is the caller's choice, so the same
forward code serves both gradient and evaluation paths.

A network may carry a leading "stack" axis: ``stack=S`` holds S independent
copies of the architecture whose forward pass runs batched over inputs of
shape (S, n, in_dim). Elementwise optimizer updates on the stacked arrays are
identical to updating S separate networks.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["Mlp", "Adam", "apply_dropout"]

_HEADS = ("linear", "softplus", "softmax")


def apply_dropout(h, p: float, rng, training: bool):
    """Inverted dropout: zero units with probability p, scale the rest by 1/(1-p).

    Identity when not training or p == 0, so evaluation needs no rescaling.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return h
    shape = h.shape if isinstance(h, Tensor) else np.shape(h)
    mask = (rng.random(shape) >= p) / (1.0 - p)
    return h * mask


class Mlp:
    """Multi-layer perceptron with layer norm, ELU activations and a typed head.

    Parameters
    ----------
    in_dim, out_dim : int
        Input and output widths.
    hidden : int
        Width of each hidden block.
    depth : int
        Number of hidden blocks; 0 gives a bare linear map.
    head : {"linear", "softplus", "softmax"}
        Output transform.
    layer_norm : bool
        Normalize each hidden block's pre-activation.
    add_const : bool
        Add a learnable scalar to the head pre-activation.
    stack : int or None
        If set, hold this many independent parameter copies with a batched
        forward over inputs of shape (stack, n, in_dim).
    rng : numpy.random.Generator
        Source for the fan-in scaled uniform weight init; biases start at
        zero, layer-norm scales at one.
    """

    def __init__(self, in_dim, out_dim, hidden=100, depth=3, head="linear",
                 layer_norm=True, add_const=False, stack=None, rng=None):
        if head not in _HEADS:
            raise ValueError(f"head must be one of {_HEADS}, got {head!r}")
        if in_dim < 1 or out_dim < 1 or hidden < 1 or depth < 0:
            raise ValueError("network dimensions must be positive (depth may be 0)")
        if stack is not None and stack < 1:
            raise ValueError(f"stack must be a positive int or None, got {stack}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = hidden
        self.depth = depth
        self.head = head
        self.layer_norm = layer_norm
        self.add_const = add_const
        self.stack = stack
        rng = rng or np.random.default_rng()

        def w_shape(fi, fo):
            return (stack, fi, fo) if stack else (fi, fo)

        def v_shape(fo):
            return (stack, 1, fo) if stack else (fo,)

        dims = [in_dim] + [hidden] * depth + [out_dim]
        self.weights, self.biases = [], []
        self.ln_scales, self.ln_shifts = [], []
        for i in range(len(dims) - 1):
            bound = 1.0 / np.sqrt(dims[i])
            self.weights.append(rng.uniform(-bound, bound, size=w_shape(dims[i], dims[i + 1])))
            self.biases.append(np.zeros(v_shape(dims[i + 1])))
            if layer_norm and i < depth:
                self.ln_scales.append(np.ones(v_shape(hidden)))
                self.ln_shifts.append(np.zeros(v_shape(hidden)))
        self.const = np.zeros((stack, 1, 1) if stack else ()) if add_const else None

    # ---- parameter access ----

    def param_list(self) -> list:
        """All parameter arrays in a fixed canonical order."""
        out = []
        for i in range(self.depth + 1):
            out.append(self.weights[i])
            out.append(self.biases[i])
            if self.layer_norm and i < self.depth:
                out.append(self.ln_scales[i])
                out.append(self.ln_shifts[i])
        if self.const is not None:
            out.append(self.const)
        return out

    def copy_params(self) -> list:
        return [p.copy() for p in self.param_list()]

    def set_params(self, params) -> None:
        for dst, src in zip(self.param_list(), params, strict=True):
            dst[...] = src

    def wrap(self) -> list:
        """Tensors aliasing the parameter arrays, ready for a traced forward."""
        return [Tensor(p) for p in self.param_list()]

    def spec(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "hidden": self.hidden,
            "depth": self.depth,
            "head": self.head,
            "layer_norm": self.layer_norm,
            "add_const": self.add_const,
            "stack": self.stack,
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "Mlp":
        return cls(rng=np.random.default_rng(0), **spec)

    # ---- forward ----

    def forward(self, x, params=None, training=False, dropout=0.0, dropout_rng=None):
        """Run the network on (n, in_dim) or, when stacked, (S, n, in_dim) inputs.

        With ``params`` a list of tensors from :meth:`wrap`, the result is a
        traced Tensor; otherwise a plain ndarray. Dropout fires only when
        ``training`` is true.
        """
        P = iter(self.param_list() if params is None else params)
        h = np.asarray(x, dtype=np.float64)
        for i in range(self.depth + 1):
            w, b = next(P), next(P)
            h = h @ w + b
            if i < self.depth:
                if self.layer_norm:
                    h = ad.layer_norm(h, next(P), next(P))
                h = ad.elu(h)
                h = apply_dropout(h, dropout, dropout_rng, training)
        if self.const is not None:
            h = h + next(P)
        if self.head == "softplus":
            h = ad.softplus(h)
        elif self.head == "softmax":
            h = ad.softmax(h, axis=-1)
        return h

    def apply(self, x) -> np.ndarray:
        """Evaluation-mode forward pass without gradient tracking."""
        return self.forward(x)


class Adam:
    """Adam with bias correction; updates parameter arrays in place.

    ``step`` performs descent, so pass gradients of a loss (negate an
    objective you want to maximize).
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v, strict=True):
            if g is None:
                g = 0.0
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
