"""Synthetic tag trajectories and anchor layouts.

Four trajectory kinds:
    - tunnel: constant forward speed along x with random lateral and vertical
      sway, amplitudes are drawn so that some runs are nearly straight
    - waypoint_box: smooth flight between random waypoints inside a box (UAV)
    - planar_amr: smooth drive between random 2D waypoints with a small
      vertical sway (ground robot)
    - collinear: an exact straight segment, the adversarial case
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from UWBInit.initializer import PoseBuffer

TRAJECTORY_KINDS = ("tunnel", "waypoint_box", "planar_amr", "collinear")

# distance kept between the tag and the walls of the extents box
WALL_MARGIN = 0.3
ANCHOR_HEIGHTS = (0.9, 2.9)


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "tunnel"
    # (length, width, height) of the tunnel or box, meters
    extents: Tuple[float, float, float] = (60.0, 4.0, 3.0)
    duration: float = 60.0
    rate: float = 10.0
    waypoint_count: int = 6
    # vertical sway amplitude of planar_amr, meters
    sway: float = 0.3
    start_time: float = 0.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}, expected one of {TRAJECTORY_KINDS}")
        extents = tuple(float(e) for e in self.extents)
        if len(extents) != 3 or min(extents) <= 2.0 * WALL_MARGIN:
            raise ValueError(f"`extents` should be three lengths > {2.0 * WALL_MARGIN}, got {self.extents}")
        object.__setattr__(self, "extents", extents)
        if not (self.duration > 0.0 and self.rate > 0.0):
            raise ValueError(f"`duration` and `rate` should be positive, got {self.duration} and {self.rate}")
        if self.waypoint_count < 2:
            raise ValueError(f"`waypoint_count` should be >= 2, got {self.waypoint_count}")
        if self.sway < 0.0:
            raise ValueError(f"`sway` should be non-negative, got {self.sway}")

    @property
    def n_poses(self) -> int:
        return int(round(self.duration * self.rate)) + 1

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_poses) / self.rate


def _smoothstep(u: np.ndarray) -> np.ndarray:
    return u * u * (3.0 - 2.0 * u)


def _through_waypoints(waypoints: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Eased piecewise-linear path; s in [0, 1] spans the whole waypoint list."""
    segments = len(waypoints) - 1
    x = np.clip(s, 0.0, 1.0) * segments
    idx = np.minimum(x.astype(int), segments - 1)
    u = _smoothstep(x - idx)[:, None]
    return waypoints[idx] + u * (waypoints[idx + 1] - waypoints[idx])


def _tunnel(spec: TrajectorySpec, rng: np.random.Generator, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    length, width, height = spec.extents
    y0, z0 = 0.5 * width, 0.5 * height
    # squared uniform draws favour small amplitudes, i.e. poorly conditioned runs
    a_y = rng.uniform() ** 2 * (y0 - WALL_MARGIN)
    a_z = rng.uniform() ** 2 * (z0 - WALL_MARGIN)
    period_y, period_z = rng.uniform(5.0, 20.0, size=2)
    phase_y, phase_z = rng.uniform(0.0, 2.0 * np.pi, size=2)
    x = WALL_MARGIN + s * (length - 2.0 * WALL_MARGIN)
    tau = t - spec.start_time
    y = y0 + a_y * np.sin(2.0 * np.pi * tau / period_y + phase_y)
    z = z0 + a_z * np.sin(2.0 * np.pi * tau / period_z + phase_z)
    return np.column_stack([x, y, z])


def _waypoint_box(spec: TrajectorySpec, rng: np.random.Generator, s: np.ndarray) -> np.ndarray:
    lo = np.full(3, WALL_MARGIN)
    hi = np.asarray(spec.extents) - WALL_MARGIN
    waypoints = rng.uniform(lo, hi, size=(spec.waypoint_count, 3))
    return _through_waypoints(waypoints, s)


def _planar_amr(spec: TrajectorySpec, rng: np.random.Generator, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    length, width, height = spec.extents
    waypoints = rng.uniform([WALL_MARGIN, WALL_MARGIN], [length - WALL_MARGIN, width - WALL_MARGIN],
                            size=(spec.waypoint_count, 2))
    xy = _through_waypoints(np.column_stack([waypoints, np.zeros(spec.waypoint_count)]), s)[:, :2]
    z0 = min(0.5, 0.5 * height)
    sway = min(spec.sway, z0 - 1e-3, height - z0 - 1e-3)
    z = z0 + sway * np.sin(2.0 * np.pi * (t - spec.start_time) / rng.uniform(4.0, 12.0))
    return np.column_stack([xy, z])


def _collinear(spec: TrajectorySpec, rng: np.random.Generator, s: np.ndarray) -> np.ndarray:
    lo = np.full(3, WALL_MARGIN)
    hi = np.asarray(spec.extents) - WALL_MARGIN
    start, end = rng.uniform(lo, hi, size=(2, 3))
    return start[None, :] + s[:, None] * (end - start)[None, :]


def gen_trajectory(spec: TrajectorySpec, seed=0) -> PoseBuffer:
    """Samples a trajectory of `spec.kind` at `spec.rate` for `spec.duration` seconds.

    Args:
        spec: trajectory shape and sampling
        seed: anything `np.random.default_rng` accepts
    Returns:
        PoseBuffer with strictly increasing timestamps
    """
    rng = np.random.default_rng(seed)
    t = spec.times()
    s = np.linspace(0.0, 1.0, t.size)
    if spec.kind == "tunnel":
        positions = _tunnel(spec, rng, s, t)
    elif spec.kind == "waypoint_box":
        positions = _waypoint_box(spec, rng, s)
    elif spec.kind == "planar_amr":
        positions = _planar_amr(spec, rng, s, t)
    else:
        positions = _collinear(spec, rng, s)
    return PoseBuffer(t, positions)


def place_anchors(spec: TrajectorySpec, count: int, seed=0) -> np.ndarray:
    """Wall-mounted anchors for the environment described by `spec`.

    Tunnel anchors are spread along the whole length on alternating side walls;
    every other kind gets anchors on the four vertical walls of the extents box.
    Heights are drawn from 0.9-2.9 m (clipped to the ceiling).

    Returns:
        anchors with shape (count, 3)
    """
    if count < 1:
        raise ValueError(f"anchor `count` should be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    length, width, height = spec.extents
    z = rng.uniform(ANCHOR_HEIGHTS[0], min(ANCHOR_HEIGHTS[1], height), size=count)

    if spec.kind == "tunnel":
        slot = length / count
        x = (np.arange(count) + 0.5) * slot + rng.uniform(-0.25, 0.25, size=count) * slot
        y = np.where(np.arange(count) % 2 == 0, 0.0, width)
        return np.column_stack([x, y, z])

    anchors = np.empty((count, 3))
    walls = rng.permutation(np.arange(count) % 4)
    along = rng.uniform(0.0, 1.0, size=count)
    for k, wall in enumerate(walls):
        if wall == 0:
            anchors[k] = (along[k] * length, 0.0, z[k])
        elif wall == 1:
            anchors[k] = (length, along[k] * width, z[k])
        elif wall == 2:
            anchors[k] = (along[k] * length, width, z[k])
        else:
            anchors[k] = (0.0, along[k] * width, z[k])
    return anchors
