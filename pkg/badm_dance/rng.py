"""Explicit-state random number generation.

All randomness in the package flows through :class:`Rng`, a thin wrapper over
numpy's Philox4x64 counter-based bit generator. Gaussian draws use the
Box-Muller transform on top of the uniform stream so results do not depend on
numpy's ziggurat implementation. There is no global generator.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


class Rng:
    """Seeded counter-based generator with Box-Muller Gaussians."""

    def __init__(self, seed: int, stream: tuple[int, ...] = ()):
        if seed < 0:
            raise ValidationError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        key = np.random.SeedSequence([self.seed, *self.stream]).generate_state(
            2, dtype=np.uint64
        )
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, *stream: int) -> "Rng":
        """Derive an independent child stream; same path -> same stream."""
        return Rng(self.seed, self.stream + tuple(stream))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws of the given shape."""
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        # 1 - u keeps the radius argument in (0, 1]
        u1 = 1.0 - self._gen.random(pairs)
        u2 = self._gen.random(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        draws = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return draws[:count].reshape(shape)
