"""Seeded random streams."""

import zlib

import numpy as np

_MASK32 = 0xFFFFFFFF


class Rng:
    """
    Deterministic random stream.

    Identical seed, path and call sequence produce identical draws on every
    run. ``child(name)`` derives an independent stream so callers can give
    each consumer (initialization, shuffling, masks, ...) its own sequence.
    """

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = path
        entropy = [self.seed & _MASK32, (self.seed >> 32) & _MASK32]
        entropy.extend(zlib.crc32(part.encode("utf-8")) for part in path)
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, name: str) -> "Rng":
        """Return the stream for ``name`` under this stream's path."""
        return Rng(self.seed, self.path + (name,))

    def uniform(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Draws from [0, 1)."""
        return self._generator.random(size)

    def normal(self, size: int | tuple[int, ...], scale: float = 1.0) -> np.ndarray:
        return self._generator.normal(0.0, scale, size)

    def truncated_normal(self, size: tuple[int, ...], scale: float) -> np.ndarray:
        """Standard normal truncated to [-2, 2] by resampling, times ``scale``."""
        values = self._generator.standard_normal(size)
        outside = np.abs(values) > 2.0
        while outside.any():
            values[outside] = self._generator.standard_normal(int(outside.sum()))
            outside = np.abs(values) > 2.0
        return values * scale

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def integers(self, low: int, high: int, size: int | tuple[int, ...] | None = None) -> np.ndarray:
        return self._generator.integers(low, high, size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"
