"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a pure-numpy implementation and a numba
``@njit`` one that fuses the elementwise passes.  The active backend is
picked once at import time from the ``RANLAB_KERNELS`` environment
variable (``auto`` | ``numba`` | ``numpy``, default ``auto``: numba when
importable, numpy otherwise).  Both backends stay importable so
``benchmarks/bench_kernels.py`` can time them against each other.

Matrix products are deliberately not here: numpy already routes ``@`` to
BLAS, which a jitted loop will not beat.

Numerical note: the two backends use identical per-component formulas,
but reductions (softmax row sums) differ in summation order, so results
can differ in the last few ulps.  Within one backend everything is
bit-reproducible.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError

_SPLITMIX_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SPLITMIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_M2 = np.uint64(0x94D049BB133111EB)
_U64_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


class _NumpyBackend:
    """Vectorized numpy implementations (the fallback path)."""

    name = "numpy"

    @staticmethod
    def sigmoid_fwd(x):
        # Branch-stable form: exponentials only of negative magnitudes.
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    @staticmethod
    def sigmoid_bwd(y, gout):
        return gout * (y * (1.0 - y))

    @staticmethod
    def tanh_fwd(x):
        return np.tanh(x)

    @staticmethod
    def tanh_bwd(y, gout):
        return gout * (1.0 - y * y)

    @staticmethod
    def softmax_xent_fwd(logits, targets):
        m = logits.max(axis=1, keepdims=True)
        ex = np.exp(logits - m)
        denom = ex.sum(axis=1, keepdims=True)
        probs = ex / denom
        rows = np.arange(logits.shape[0])
        nats = np.log(denom[:, 0]) + m[:, 0] - logits[rows, targets]
        return float(nats.mean()), probs

    @staticmethod
    def softmax_xent_bwd(probs, targets, scale):
        glogits = probs * scale
        rows = np.arange(probs.shape[0])
        glogits[rows, targets] -= scale
        return glogits

    @staticmethod
    def embedding_bwd(ids, gout, gtable):
        np.add.at(gtable, ids, gout)

    @staticmethod
    def rng_fill_u64(seed, start, out):
        n = out.shape[0]
        ctr = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(start)
        z = np.uint64(seed) + ctr * _SPLITMIX_GOLDEN
        z ^= z >> np.uint64(30)
        z *= _SPLITMIX_M1
        z ^= z >> np.uint64(27)
        z *= _SPLITMIX_M2
        z ^= z >> np.uint64(31)
        out[:] = z

    @staticmethod
    def weight_cube(i_gates, f_gates):
        # w[t, j] = i[j] * prod(f[j+1..t]), lower-triangular in (t, j).
        steps, width = i_gates.shape
        w = np.zeros((steps, steps, width), dtype=i_gates.dtype)
        w[0, 0] = i_gates[0]
        for t in range(1, steps):
            w[t, :t] = w[t - 1, :t] * f_gates[t]
            w[t, t] = i_gates[t]
        return w


def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def sigmoid_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                v = x[i, j]
                if v >= 0.0:
                    out[i, j] = 1.0 / (1.0 + np.exp(-v))
                else:
                    e = np.exp(v)
                    out[i, j] = e / (1.0 + e)
        return out

    @njit(cache=True)
    def sigmoid_bwd(y, gout):
        out = np.empty_like(y)
        for i in range(y.shape[0]):
            for j in range(y.shape[1]):
                out[i, j] = gout[i, j] * (y[i, j] * (1.0 - y[i, j]))
        return out

    @njit(cache=True)
    def tanh_fwd(x):
        out = np.empty_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                out[i, j] = np.tanh(x[i, j])
        return out

    @njit(cache=True)
    def tanh_bwd(y, gout):
        out = np.empty_like(y)
        for i in range(y.shape[0]):
            for j in range(y.shape[1]):
                out[i, j] = gout[i, j] * (1.0 - y[i, j] * y[i, j])
        return out

    @njit(cache=True)
    def softmax_xent_fwd(logits, targets):
        rows, cols = logits.shape
        probs = np.empty_like(logits)
        total = 0.0
        for i in range(rows):
            m = logits[i, 0]
            for j in range(1, cols):
                if logits[i, j] > m:
                    m = logits[i, j]
            denom = 0.0
            for j in range(cols):
                e = np.exp(logits[i, j] - m)
                probs[i, j] = e
                denom += e
            for j in range(cols):
                probs[i, j] /= denom
            total += np.log(denom) + m - logits[i, targets[i]]
        return total / rows, probs

    @njit(cache=True)
    def softmax_xent_bwd(probs, targets, scale):
        rows, cols = probs.shape
        glogits = np.empty_like(probs)
        for i in range(rows):
            for j in range(cols):
                glogits[i, j] = probs[i, j] * scale
            glogits[i, targets[i]] -= scale
        return glogits

    @njit(cache=True)
    def embedding_bwd(ids, gout, gtable):
        for i in range(ids.shape[0]):
            row = ids[i]
            for j in range(gout.shape[1]):
                gtable[row, j] += gout[i, j]

    @njit(cache=True)
    def rng_fill_u64(seed, start, out):
        golden = np.uint64(0x9E3779B97F4A7C15)
        m1 = np.uint64(0xBF58476D1CE4E5B9)
        m2 = np.uint64(0x94D049BB133111EB)
        for i in range(out.shape[0]):
            z = np.uint64(seed) + (np.uint64(start) + np.uint64(i + 1)) * golden
            z ^= z >> np.uint64(30)
            z *= m1
            z ^= z >> np.uint64(27)
            z *= m2
            z ^= z >> np.uint64(31)
            out[i] = z

    @njit(cache=True)
    def weight_cube(i_gates, f_gates):
        steps, width = i_gates.shape
        w = np.zeros((steps, steps, width), dtype=i_gates.dtype)
        for m in range(width):
            w[0, 0, m] = i_gates[0, m]
        for t in range(1, steps):
            for j in range(t):
                for m in range(width):
                    w[t, j, m] = w[t - 1, j, m] * f_gates[t, m]
            for m in range(width):
                w[t, t, m] = i_gates[t, m]
        return w

    class _NumbaBackend:
        name = "numba"

    backend = _NumbaBackend()
    backend.sigmoid_fwd = sigmoid_fwd
    backend.sigmoid_bwd = sigmoid_bwd
    backend.tanh_fwd = tanh_fwd
    backend.tanh_bwd = tanh_bwd
    backend.softmax_xent_fwd = softmax_xent_fwd
    backend.softmax_xent_bwd = softmax_xent_bwd
    backend.embedding_bwd = embedding_bwd
    backend.rng_fill_u64 = rng_fill_u64
    backend.weight_cube = weight_cube
    return backend


numpy_backend = _NumpyBackend()

try:
    numba_backend = _build_numba_backend()
except ImportError:
    numba_backend = None


def _select(env_value):
    choice = (env_value or "auto").strip().lower()
    if choice == "numpy":
        return numpy_backend
    if choice == "numba":
        if numba_backend is None:
            raise ConfigError("RANLAB_KERNELS=numba but numba is not importable")
        return numba_backend
    if choice == "auto":
        return numba_backend if numba_backend is not None else numpy_backend
    raise ConfigError(f"RANLAB_KERNELS must be auto, numba, or numpy, not {env_value!r}")


active = _select(os.environ.get("RANLAB_KERNELS"))

sigmoid_fwd = active.sigmoid_fwd
sigmoid_bwd = active.sigmoid_bwd
tanh_fwd = active.tanh_fwd
tanh_bwd = active.tanh_bwd
softmax_xent_fwd = active.softmax_xent_fwd
softmax_xent_bwd = active.softmax_xent_bwd
embedding_bwd = active.embedding_bwd
rng_fill_u64 = active.rng_fill_u64
weight_cube = active.weight_cube


def backend_name():
    return active.name


def unit_floats(raw_u64):
    """Map raw 64-bit words to float64 in [0, 1) using the top 53 bits."""
    return (raw_u64 >> np.uint64(11)).astype(np.float64) * _U64_TO_UNIT
