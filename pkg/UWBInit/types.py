"""Core value types shared by the geometry, filter, solver and initializer modules."""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


def as_vec3(value) -> np.ndarray:
    vec = np.asarray(value, dtype=np.float64).reshape(-1)
    if vec.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"non-finite vector component in {vec}")
    return vec


@dataclass(frozen=True, eq=False)
class SyncedSample:
    """A tag position time-aligned with one range measurement.

    Args:
        t: timestamp in seconds
        tag_pos: tag position (3,) in the world frame, meters
        range: measured tag-to-anchor distance in meters, strictly positive
    """
    t: float
    tag_pos: np.ndarray
    range: float

    def __post_init__(self):
        object.__setattr__(self, "tag_pos", as_vec3(self.tag_pos))
        self._check_scalars()

    @classmethod
    def at_interpolated(cls, t: float, tag_pos: np.ndarray, range: float) -> "SyncedSample":
        """Wraps a position interpolated from already validated poses without re-checking it."""
        sample = object.__new__(cls)
        object.__setattr__(sample, "t", t)
        object.__setattr__(sample, "tag_pos", tag_pos)
        object.__setattr__(sample, "range", range)
        sample._check_scalars()
        return sample

    def _check_scalars(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "range", float(self.range))
        if not math.isfinite(self.t):
            raise ValueError(f"non-finite timestamp {self.t}")
        if not (math.isfinite(self.range) and self.range > 0.0):
            raise ValueError(f"range must be finite and > 0, got {self.range}")


def stack_samples(samples: Sequence[SyncedSample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (t, positions, ranges) arrays with shapes (n,), (n, 3), (n,)."""
    n = len(samples)
    t = np.fromiter((s.t for s in samples), dtype=np.float64, count=n)
    ranges = np.fromiter((s.range for s in samples), dtype=np.float64, count=n)
    positions = np.empty((n, 3), dtype=np.float64)
    for i, s in enumerate(samples):
        positions[i] = s.tag_pos
    return t, positions, ranges


def make_samples(t, positions, ranges) -> list:
    return [SyncedSample(float(ti), p, float(di)) for ti, p, di in zip(t, positions, ranges)]
