"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

import numpy as np

from . import autograd as ag


def relative_error(a, b, floor=1e-12):
    """||a-b|| / (||a||+||b||); below ``floor`` the denominator is clamped, making it absolute."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(fn, tensor, h=1e-3):
    """Elementwise central differences of scalar ``fn()`` w.r.t. ``tensor.data``."""
    g = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    gf = g.reshape(-1)
    with ag.no_grad():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = float(fn().data)
            flat[i] = old - h
            fm = float(fn().data)
            flat[i] = old
            gf[i] = (fp - fm) / (2 * h)
    return g


def directional_check(fn, tensors, rng, h=1e-3, floor=1e-12):
    """Compare <grad, u> against (f(x+hu) - f(x-hu)) / 2h for one random direction u per tensor.

    Returns the worst relative error. ``fn`` must rebuild the graph from the
    tensors' current data on every call.
    """
    for t in tensors:
        t.grad = None
    fn().backward()
    worst = 0.0
    for t in tensors:
        analytic_full = np.zeros_like(t.data) if t.grad is None else t.grad
        u = rng.standard_normal(t.shape)
        base = t.data.copy()
        with ag.no_grad():
            t.data[...] = base + h * u
            fp = float(fn().data)
            t.data[...] = base - h * u
            fm = float(fn().data)
            t.data[...] = base
        numeric = (fp - fm) / (2 * h)
        analytic = float((analytic_full * u).sum())
        worst = max(worst, relative_error(analytic, numeric, floor))
    return worst


def check_grads(fn, tensors, h=1e-3):
    """Full elementwise check; returns the worst relative error over tensors."""
    for t in tensors:
        t.grad = None
    fn().backward()
    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        worst = max(worst, relative_error(analytic, numeric_grad(fn, t, h)))
    return worst
