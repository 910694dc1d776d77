"""Synthetic range measurements: d = ||p_U - p_A|| + bias + noise (+ outlier)."""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from UWBInit.initializer import PoseBuffer, interpolate
from UWBInit.types import SyncedSample, as_vec3

logger = logging.getLogger(__name__)

# generated ranges never go below this, a radio cannot report a non-positive distance
MIN_RANGE = 0.01


@dataclass(frozen=True)
class NoiseModel:
    sigma_d: float = 0.1
    bias: float = 0.0
    outlier_prob: float = 0.0
    outlier_low: float = 0.5
    outlier_high: float = 5.0
    seed: int = 0
    # anchors farther than this produce no measurement, None disables the limit
    max_range: Optional[float] = 20.0
    # NLOS-like outliers only lengthen the range; False draws the sign at random
    positive_outliers: bool = True

    def __post_init__(self):
        if self.sigma_d < 0.0:
            raise ValueError(f"`sigma_d` should be >= 0, got {self.sigma_d}")
        if not 0.0 <= self.outlier_prob < 1.0:
            raise ValueError(f"`outlier_prob` should be in [0, 1), got {self.outlier_prob}")
        if not 0.0 < self.outlier_low <= self.outlier_high:
            raise ValueError(
                f"outlier magnitudes should satisfy 0 < low <= high, got ({self.outlier_low}, {self.outlier_high})"
            )
        if self.max_range is not None and not self.max_range > 0.0:
            raise ValueError(f"`max_range` should be positive or None, got {self.max_range}")


@dataclass
class RangeStream:
    """Ranges of one anchor with the labels the simulator knows and the pipeline does not."""
    t: np.ndarray
    d: np.ndarray
    distance: np.ndarray
    is_outlier: np.ndarray

    def __len__(self) -> int:
        return int(self.t.size)

    def synced(self, poses: PoseBuffer, max_gap: float = np.inf) -> List[SyncedSample]:
        return [SyncedSample(t, interpolate(poses, t, max_gap), d) for t, d in zip(self.t, self.d)]


def range_times(poses: PoseBuffer, offset: float = 0.0) -> np.ndarray:
    """Pose timestamps shifted by `offset`, keeping only those inside the pose span."""
    t = poses.times + offset
    return t[(t >= poses.times[0]) & (t <= poses.times[-1])]


def gen_ranges(poses: PoseBuffer, anchor, noise: NoiseModel, offset: float = 0.0,
               seed=None) -> RangeStream:
    """Generates the range stream one anchor produces along a trajectory.

    Args:
        poses: tag trajectory
        anchor: anchor position (3,)
        noise: noise, bias, outlier and visibility model
        offset: shift of the range timestamps against the pose timestamps,
            seconds; non-zero offsets make the pipeline interpolate
        seed: overrides `noise.seed`
    Returns:
        RangeStream restricted to the epochs where the anchor is within `noise.max_range`
    """
    anchor = as_vec3(anchor)
    rng = np.random.default_rng(noise.seed if seed is None else seed)
    t = range_times(poses, offset)
    times, pose_positions = poses.arrays()
    positions = np.column_stack([np.interp(t, times, pose_positions[:, axis]) for axis in range(3)])
    distance = np.linalg.norm(positions - anchor[None, :], axis=1)

    # draws happen for every epoch so visibility never shifts the random sequence
    eta = rng.normal(0.0, noise.sigma_d, size=t.size) if noise.sigma_d > 0.0 else np.zeros(t.size)
    is_outlier = rng.uniform(size=t.size) < noise.outlier_prob
    magnitude = rng.uniform(noise.outlier_low, noise.outlier_high, size=t.size)
    sign = np.ones(t.size) if noise.positive_outliers else rng.choice([-1.0, 1.0], size=t.size)

    d = distance + noise.bias + eta + np.where(is_outlier, sign * magnitude, 0.0)
    d = np.maximum(d, MIN_RANGE)

    visible = np.ones(t.size, dtype=bool) if noise.max_range is None else distance <= noise.max_range
    logger.debug(f"anchor {np.round(anchor, 2).tolist()}: {int(visible.sum())}/{t.size} epochs in range, "
                 f"{int(is_outlier[visible].sum())} outliers")
    return RangeStream(t[visible], d[visible], distance[visible], is_outlier[visible])
