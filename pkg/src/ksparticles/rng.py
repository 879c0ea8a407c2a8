"""Deterministic counter-based random streams.

Every stream is a Philox generator keyed by a :class:`numpy.random.SeedSequence`
built from ``(seed, domain tag, *indices)``, so draws depend only on the
stream's coordinates and never on scheduling order.
"""

from __future__ import annotations

import numpy as np

PARTICLE = 1
SPHERE = 2
SCALAR = 3
INITIAL = 4
MASS = 5
SAMPLER = 6


def stream(seed: int, tag: int, *indices: int) -> np.random.Generator:
    words = [int(seed), int(tag), *(int(i) for i in indices)]
    if any(w < 0 for w in words):
        raise ValueError("stream coordinates must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


class ParticleNoise:
    """Standard normal increments, one stream per particle of one path.

    Each call to :meth:`block` returns an array of shape ``(steps, n, 2)``.
    """

    def __init__(self, seed: int, path_index: int, n: int, tag: int = PARTICLE, block_steps: int = 8192):
        self.generators = [stream(seed, tag, path_index, p) for p in range(n)]
        self.n = n
        self.block_steps = block_steps

    def block(self) -> np.ndarray:
        out = np.empty((self.block_steps, self.n, 2))
        for p, gen in enumerate(self.generators):
            out[:, p, :] = gen.standard_normal((self.block_steps, 2))
        return out


class GeneratorNoise:
    """Normal blocks of a given trailing shape drawn from one generator."""

    def __init__(self, rng: np.random.Generator, shape: tuple, block_steps: int = 8192):
        self.rng = rng
        self.shape = tuple(shape)
        self.block_steps = block_steps

    def block(self) -> np.ndarray:
        return self.rng.standard_normal((self.block_steps, *self.shape))
