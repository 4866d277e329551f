"""Independent oracles shared by the test modules.

Everything here deliberately avoids the library's own computation
paths: scalar loops, finite differences and brute-force enumeration
only.
"""

from __future__ import annotations

import math

import numpy as np


def scalar_mlp_forward(layers, activations, x_rows):
    """Per-element re-implementation of a dense forward pass.

    layers: [(W, b)] with W (in, out); x_rows: list of lists.
    Pure python loops; returns list of output rows.
    """

    def act(name, v):
        if name == "relu":
            return max(0.0, v)
        if name == "identity":
            return v
        if name == "softplus":
            return math.log1p(math.exp(-abs(v))) + max(v, 0.0)
        raise ValueError(name)

    out_rows = []
    for row in x_rows:
        h = list(row)
        for (w, b), name in zip(layers, activations):
            nxt = []
            for j in range(len(b)):
                s = b[j]
                for i in range(len(h)):
                    s += h[i] * w[i][j]
                nxt.append(act(name, s))
            h = nxt
        out_rows.append(h)
    return out_rows


def finite_diff_param_grads(params, loss_fn, h=1e-4):
    """Central finite differences of loss_fn() w.r.t. every entry of params.

    loss_fn is a closure over params that returns a scalar; params are
    perturbed in place and restored.  Returns [(dW, db)] per layer.
    """
    grads = []
    for w, b in params.layers:
        pair = []
        for arr in (w, b):
            g = np.zeros_like(arr)
            flat = arr.ravel()
            gflat = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                hi = loss_fn()
                flat[i] = orig - h
                lo = loss_fn()
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * h)
            pair.append(g)
        grads.append(tuple(pair))
    return grads


def assert_grads_close(analytic, numeric, rel_tol, abs_floor=1e-8):
    """Entrywise |a - n| <= rel_tol * max(|a|, |n|, abs_floor)."""
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), abs_floor)
            err = np.abs(a - n) / denom
            assert err.max() <= rel_tol, f"gradient mismatch: max rel err {err.max():.3e}"


def min_relu_margin(params, tape):
    """Smallest |pre-activation| over the relu layers of a forward tape.

    Finite differences are only trustworthy when no relu unit sits close
    enough to its kink for the probe step to flip it.
    """
    margin = np.inf
    for (_, z), act in zip(tape, params.activations):
        if act == "relu":
            margin = min(margin, float(np.abs(z).min()))
    return margin


def scalar_adam_trajectory(w0, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Standalone scalar Adam; returns the parameter after `steps` updates."""
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        w = w - lr * mhat / (math.sqrt(vhat) + eps)
    return w
