"""Shared test utilities: finite differences and error metrics."""

import numpy as np


def fd_grads(build_loss, params, h=1e-5):
    """Central finite-difference gradients of a scalar loss.

    ``build_loss()`` must evaluate the loss from the params' current
    ``.data`` buffers; each component is perturbed in place.
    """
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            lp = build_loss()
            flat[k] = old - h
            lm = build_loss()
            flat[k] = old
            g[k] = (lp - lm) / (2 * h)
        grads.append(g.reshape(p.data.shape))
    return grads


def rel_err(analytic, numeric):
    """Max relative error with an absolute floor of 1 in the denominator."""
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))
    return float(np.max(np.abs(a - f) / denom)) if a.size else 0.0
