"""Seedable counter-mode PRNG used for init, dropout, and anything random.

The generator hashes ``seed + k`` with the splitmix64 finalizer for an
increasing counter ``k``, so a stream is fully described by
``(algorithm, seed, counter)`` and can be checkpointed and resumed
bit-exactly.  Counter mode (rather than an evolving hidden state) is
what lets the numpy and numba backends produce identical streams from a
vectorized fill.
"""

from __future__ import annotations

import numpy as np

from . import kernels

ALGORITHM = "splitmix64-counter-v1"


class Rng:
    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words, advancing the counter."""
        out = np.empty(n, dtype=np.uint64)
        kernels.rng_fill_u64(np.uint64(self.seed), np.uint64(self.counter), out)
        self.counter += n
        return out

    def uniform(self, shape) -> np.ndarray:
        """Uniform float64 draws in [0, 1) with the given shape."""
        shape = tuple(shape)
        n = 1
        for s in shape:
            n *= s
        return kernels.unit_floats(self.raw(n)).reshape(shape)

    def uniform_signed(self, scale: float, shape) -> np.ndarray:
        """Uniform draws in (-scale, +scale)."""
        return (self.uniform(shape) * 2.0 - 1.0) * scale

    def state(self) -> dict:
        return {"algorithm": ALGORITHM, "seed": self.seed, "counter": self.counter}

    @classmethod
    def from_state(cls, state: dict) -> "Rng":
        if state.get("algorithm") != ALGORITHM:
            raise ValueError(
                f"unsupported PRNG algorithm {state.get('algorithm')!r}, "
                f"this build implements {ALGORITHM}"
            )
        return cls(state["seed"], state["counter"])
