"""Counter-based Gaussian noise streams for reproducible ensembles.

Each trajectory owns a Philox-keyed stream, so the increments are a
pure function of (seed, trajectory_index, step_index) and independent
of how many workers run or in what order trajectories complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    trajectory_index: int = 0

    def _generator(self) -> np.random.Generator:
        key = ((int(self.seed) & _MASK64) << 64) | (int(self.trajectory_index) & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def gaussian_increments(self, n: int, dt: float) -> np.ndarray:
        """n i.i.d. Wiener increments, mean 0 and variance dt."""
        return self._generator().standard_normal(n) * math.sqrt(dt)
