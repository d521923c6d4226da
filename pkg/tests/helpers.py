"""Shared test utilities: model factories, finite differences, error measures."""

import numpy as np

from adham.data import Dataset
from adham.model import AdhamModel
from adham.network import Mlp


def make_model(D=3, C=4, hidden=5, depth=1, time_scale=1.0, seed=0,
               assign_depth=None, add_const=False):
    r = np.random.default_rng(seed)
    assignment = Mlp(D, C, hidden=hidden,
                     depth=depth if assign_depth is None else assign_depth,
                     head="softmax", rng=r)
    bank = Mlp(2, 1, hidden=hidden, depth=depth, head="softplus", stack=D,
               add_const=add_const, rng=r)
    logits = r.normal(size=(C, D))
    return AdhamModel(assignment, logits, bank, time_scale)


def zero_bank(model):
    # all-zero hazard parameters give the constant rate log(2)/time_scale
    for w in model.hazard_bank.weights:
        w[...] = 0.0
    for b in model.hazard_bank.biases:
        b[...] = 0.0
    return model


def make_data(model, n=20, seed=1, all_events=False):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, model.n_features))
    t = r.uniform(0.1, 2.0, size=n)
    e = np.ones(n, dtype=int) if all_events else r.integers(0, 2, size=n)
    return Dataset(x, t, e)


def fd_gradients(f, arrays, step=1e-5, coords=None, extrapolate=False):
    """Finite-difference gradients of a scalar function of in-place arrays.

    ``f`` takes no arguments and recomputes the scalar from ``arrays``; each
    array is perturbed coordinate by coordinate. ``coords`` optionally maps
    array index -> iterable of index tuples to restrict the sweep. With
    ``extrapolate`` a second central difference at half the step removes the
    leading truncation term (fourth-order accuracy), which matters where the
    gradient itself is orders of magnitude smaller than the function.
    """
    def central(a, idx, h):
        orig = a[idx]
        a[idx] = orig + h
        fp = f()
        a[idx] = orig - h
        fm = f()
        a[idx] = orig
        return (fp - fm) / (2.0 * h)

    grads = [np.zeros_like(a) for a in arrays]
    for ai, a in enumerate(arrays):
        if coords is not None and ai in coords:
            idx_iter = coords[ai]
        else:
            idx_iter = np.ndindex(a.shape)
        for idx in idx_iter:
            g = central(a, idx, step)
            if extrapolate:
                g = (4.0 * central(a, idx, step / 2.0) - g) / 3.0
            grads[ai][idx] = g
    return grads


def rel_err(a, b, floor=1e-6):
    """Elementwise relative error with an absolute floor on the denominator."""
    a = np.asarray(a)
    b = np.asarray(b)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return np.abs(a - b) / denom
