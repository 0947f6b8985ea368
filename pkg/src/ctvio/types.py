"""Value types shared by the simulator, loaders, estimator and evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonMonotonicTime


@dataclass(frozen=True)
class PoseObservation:
    """Up-to-scale keyframe pose standing in for a visual front-end."""

    timestamp: float
    position: np.ndarray
    rotation: np.ndarray
    position_sigma: float = 1e-3
    rotation_sigma: float = 1e-3

    def __post_init__(self):
        if not (self.position_sigma > 0 and self.rotation_sigma > 0):
            raise ValueError("observation sigmas must be positive")
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.rotation))):
            raise ValueError("observation must be finite")


class Trajectory:
    """Timestamped poses with strictly increasing timestamps."""

    def __init__(self, times, positions, rotations):
        self.times = np.asarray(times, dtype=float).reshape(-1)
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
        if not (len(self.times) == len(self.positions) == len(self.rotations)):
            raise ValueError("times, positions and rotations differ in length")
        if np.any(np.diff(self.times) <= 0.0):
            raise NonMonotonicTime("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        span = f"{self.times[0]:.3f}..{self.times[-1]:.3f}s" if len(self) else "empty"
        return f"Trajectory({len(self)} poses, {span})"

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3, 3)))
