"""Deterministic randomness shared by every sampler.

``RngStream`` wraps a counter-based Philox generator. Uniform variates come
from the raw 64-bit counter output; standard Gaussians are produced by an
explicit Box-Muller transform on those uniforms. This keeps the whole
variate pipeline a pure function of (seed, stream, counter), so identical
seeds reproduce identical sequences run to run, and chains can own
non-overlapping streams derived from (master seed, chain index).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["RngStream"]

_MASK64 = 0xFFFFFFFFFFFFFFFF


class RngStream:
    """Seeded stream of uniform and standard-normal variates.

    Parameters
    ----------
    seed : int
        Master seed (used modulo 2**64).
    stream : int, optional
        Sub-stream index; streams with distinct indices are independent.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def spawn(self, stream: int) -> "RngStream":
        """Independent stream for a given chain/component index."""
        return RngStream(self.seed, stream)

    def _raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(n)

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform variates on [0, 1) with 53-bit resolution."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)) * 2.0**-53
        return u.reshape(shape) if shape else float(u[0])

    def _uniform_open(self, n: int) -> np.ndarray:
        # (0, 1]: safe under log()
        return ((self._raw(n) >> np.uint64(11)) + 1) * 2.0**-53

    def standard_normal(self, shape=()) -> np.ndarray:
        """Standard Gaussian variates via the Box-Muller transform."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = self._uniform_open(m)
        u2 = self._uniform_open(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if shape else float(z[0])

    def integers(self, high: int, size: int) -> np.ndarray:
        """Unbiased integers on [0, high) via rejection on the raw stream."""
        if high <= 0:
            raise ValueError("high must be positive")
        span = (1 << 64) // high * high
        chunks: list[np.ndarray] = []
        need = int(size)
        while need > 0:
            raw = self._raw(need + 8)
            if span < (1 << 64):
                raw = raw[raw < np.uint64(span)]
            vals = (raw % np.uint64(high)).astype(np.int64)[:need]
            chunks.append(vals)
            need -= len(vals)
        return np.concatenate(chunks)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (stable argsort of uniforms)."""
        return np.argsort(self.uniform(n), kind="stable")
