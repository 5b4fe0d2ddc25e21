"""Counter-based random number streams.

All Monte Carlo sampling in the package goes through :class:`NoiseSource`,
which wraps numpy's Philox bit generator keyed by ``(seed, stream)``.  Philox
is counter-based, so a given (seed, stream) pair always produces the same
sequence, independent of what other streams were consumed.  Parallel workers
can safely use distinct stream ids derived from one root seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["NoiseSource", "generator"]


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    """A Philox generator keyed by (seed, stream); bit-reproducible."""
    key = np.array([np.uint64(seed), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class NoiseSource:
    """Reproducible standard-normal draws for the reparameterization trick.

    Parameters
    ----------
    seed : int
        Root seed.
    stream : int
        Stream id; distinct streams are statistically independent.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = generator(seed, stream)

    def standard_normal(self, shape) -> np.ndarray:
        """Next block of N(0,1) draws of the given shape."""
        return self._gen.standard_normal(shape)

    def spawn(self, stream: int) -> "NoiseSource":
        """Independent source for another stream of the same root seed."""
        return NoiseSource(self.seed, stream)
