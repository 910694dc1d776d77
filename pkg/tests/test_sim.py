import math
import warnings

import numpy as np
import pytest
from scipy.stats import binom

from conftest import WALL_ANCHOR, box_positions, ranges_to, samples_from
from UWBInit.solver import estimate_anchor
from sim.baselines import (
    RansacParams,
    filter_samples,
    ransac_consensus,
    ransac_iterations,
    run_fixed_window,
    run_ransac,
)
from sim.ranges import MIN_RANGE, NoiseModel, gen_ranges
from sim.trajectories import TRAJECTORY_KINDS, WALL_MARGIN, TrajectorySpec, gen_trajectory, place_anchors


## trajectories

def test_collinear_trajectory_is_a_straight_segment():
    poses = gen_trajectory(TrajectorySpec(kind="collinear", extents=(10.0, 4.0, 3.0)), seed=7)
    p = poses.positions
    direction = (p[-1] - p[0]) / np.linalg.norm(p[-1] - p[0])
    offsets = (p - p[0]) - np.outer((p - p[0]) @ direction, direction)
    assert np.abs(offsets).max() < 1e-12


@pytest.mark.parametrize("kind", TRAJECTORY_KINDS)
def test_trajectories_stay_inside_the_extents(kind):
    spec = TrajectorySpec(kind=kind, extents=(30.0, 4.0, 3.0), duration=30.0)
    for seed in range(5):
        poses = gen_trajectory(spec, seed=seed)
        assert len(poses) == spec.n_poses
        assert np.all(np.diff(poses.times) > 0.0)
        p = poses.positions
        # the ground robot rides below the wall margin
        lo = np.array([WALL_MARGIN, WALL_MARGIN, 0.0 if kind == "planar_amr" else WALL_MARGIN])
        assert np.all(p >= lo - 1e-9)
        assert np.all(p <= np.asarray(spec.extents) - WALL_MARGIN + 1e-9)


def test_trajectory_is_seed_deterministic():
    spec = TrajectorySpec(kind="tunnel")
    a, b = gen_trajectory(spec, seed=3), gen_trajectory(spec, seed=3)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, gen_trajectory(spec, seed=4).positions)


def test_trajectory_spec_validation():
    with pytest.raises(ValueError):
        TrajectorySpec(kind="spiral")
    with pytest.raises(ValueError):
        TrajectorySpec(extents=(10.0, 0.5, 3.0))
    with pytest.raises(ValueError):
        TrajectorySpec(waypoint_count=1)


@pytest.mark.parametrize("kind", ["tunnel", "waypoint_box"])
def test_anchors_are_wall_mounted(kind):
    spec = TrajectorySpec(kind=kind, extents=(40.0, 4.0, 3.0))
    anchors = place_anchors(spec, 12, seed=1)
    assert anchors.shape == (12, 3)
    length, width, height = spec.extents
    on_wall = np.isclose(anchors[:, 1], 0.0) | np.isclose(anchors[:, 1], width)
    if kind != "tunnel":
        on_wall |= np.isclose(anchors[:, 0], 0.0) | np.isclose(anchors[:, 0], length)
    assert on_wall.all()
    assert np.all((anchors[:, 2] >= 0.9) & (anchors[:, 2] <= min(2.9, height)))
    with pytest.raises(ValueError):
        place_anchors(spec, 0)


## ranges

def _line(n=10_001):
    spec = TrajectorySpec(kind="collinear", extents=(10.0, 4.0, 3.0), duration=(n - 1) / 10.0)
    return gen_trajectory(spec, seed=0)


def test_noiseless_ranges_are_exact():
    poses = _line(201)
    stream = gen_ranges(poses, WALL_ANCHOR, NoiseModel(sigma_d=0.0, max_range=None))
    np.testing.assert_allclose(stream.d, ranges_to(poses.positions, WALL_ANCHOR), rtol=0, atol=1e-12)
    assert not stream.is_outlier.any()


def test_bias_and_noise_statistics():
    sigma, bias = 0.1, 0.3
    poses = _line()
    stream = gen_ranges(poses, WALL_ANCHOR, NoiseModel(sigma_d=sigma, bias=bias, max_range=None, seed=11))
    errors = stream.d - stream.distance
    assert errors.mean() == pytest.approx(bias, abs=4.0 * sigma / math.sqrt(errors.size))
    assert errors.std() == pytest.approx(sigma, rel=0.05)


def test_outlier_rate_and_magnitude():
    poses = _line()
    noise = NoiseModel(sigma_d=0.0, outlier_prob=0.1, outlier_low=1.0, outlier_high=4.0, max_range=None, seed=5)
    stream = gen_ranges(poses, WALL_ANCHOR, noise)
    lo, hi = binom.interval(0.999, len(stream), 0.1)
    assert lo <= stream.is_outlier.sum() <= hi
    offsets = (stream.d - stream.distance)[stream.is_outlier]
    assert np.all((offsets >= 1.0 - 1e-12) & (offsets <= 4.0 + 1e-12))


def test_outliers_of_either_sign():
    poses = _line(2001)
    noise = NoiseModel(sigma_d=0.0, outlier_prob=0.3, max_range=None, positive_outliers=False, seed=2)
    stream = gen_ranges(poses, WALL_ANCHOR, noise)
    offsets = (stream.d - stream.distance)[stream.is_outlier]
    assert (offsets > 0.0).any() and (offsets < 0.0).any()
    # clipping at MIN_RANGE can shorten a negative outlier
    assert np.all((np.abs(offsets) >= 0.5 - 1e-12) | (stream.d[stream.is_outlier] == MIN_RANGE))


def test_ranges_stay_positive():
    poses = _line(2001)
    noise = NoiseModel(sigma_d=0.5, outlier_prob=0.3, outlier_high=50.0, max_range=None, seed=8)
    assert gen_ranges(poses, poses.positions[1000], noise).d.min() >= MIN_RANGE


def test_out_of_range_anchor_is_invisible():
    poses = gen_trajectory(TrajectorySpec(kind="tunnel", extents=(60.0, 4.0, 3.0)), seed=0)
    stream = gen_ranges(poses, [0.0, 0.0, 2.0], NoiseModel(max_range=20.0))
    assert 0 < len(stream) < len(poses)
    assert stream.distance.max() <= 20.0


def test_offset_timestamps_are_interpolated():
    poses = _line(101)
    stream = gen_ranges(poses, WALL_ANCHOR, NoiseModel(sigma_d=0.0, max_range=None), offset=0.05)
    assert len(stream) == len(poses) - 1
    samples = stream.synced(poses)
    np.testing.assert_allclose([s.range for s in samples], ranges_to(np.array([s.tag_pos for s in samples]), WALL_ANCHOR))


## baselines

def test_ransac_iteration_counts():
    assert ransac_iterations(0.95, 60, 0.1) == 1666
    assert ransac_iterations(0.99, 4, 0.5) == 72
    assert ransac_iterations(0.95, 60, 0.0) == 1
    for args in ((1.0, 60, 0.1), (0.95, 0, 0.1), (0.95, 60, 1.0)):
        with pytest.raises(ValueError):
            ransac_iterations(*args)
    assert RansacParams(max_rounds=100).rounds() == 100
    assert RansacParams().rounds() == 1666


def test_ransac_on_clean_data_matches_direct_estimate(rng):
    positions = box_positions(rng, 200)
    samples = samples_from(positions, ranges_to(positions, WALL_ANCHOR, sigma=0.01, rng=rng))
    estimate, mask = ransac_consensus(samples, RansacParams(s=20, inlier_threshold=0.1, max_rounds=50, seed=1))
    assert mask.all()
    direct = estimate_anchor(samples)
    np.testing.assert_allclose(estimate.position, direct.position, atol=1e-3)


def test_ransac_excludes_outliers(rng):
    n = 300
    positions = box_positions(rng, n)
    ranges = ranges_to(positions, WALL_ANCHOR, sigma=0.02, rng=rng)
    outliers = rng.choice(n, size=30, replace=False)
    ranges[outliers] += rng.uniform(1.0, 4.0, size=30)
    samples = samples_from(positions, ranges)
    params = RansacParams(p=0.99, s=20, e=0.1, inlier_threshold=0.1, seed=3)
    estimate, mask = ransac_consensus(samples, params)
    assert (~mask[outliers]).mean() >= 0.95
    assert estimate.converged
    assert estimate.error_to(WALL_ANCHOR) < 0.05
    assert run_ransac(samples, params).error_to(WALL_ANCHOR) == pytest.approx(estimate.error_to(WALL_ANCHOR))


def test_ransac_argument_errors(box_samples):
    with pytest.raises(ValueError):
        ransac_consensus(box_samples, RansacParams(s=4, inlier_threshold=0.1))
    with pytest.raises(ValueError):
        ransac_consensus(box_samples, RansacParams(s=20))
    with pytest.raises(ValueError):
        ransac_consensus(box_samples[:10], RansacParams(s=20, inlier_threshold=0.1))


def test_fixed_window(box_samples):
    estimate = run_fixed_window(box_samples, window=50)
    assert estimate.error_to(WALL_ANCHOR) < 1e-6
    with pytest.warns(UserWarning):
        run_fixed_window(box_samples, window=500)
    with pytest.raises(ValueError):
        run_fixed_window(box_samples, window=4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run_fixed_window(box_samples)


def test_fixed_window_on_collinear_start_is_unreliable():
    positions = np.column_stack([np.linspace(0.5, 3.5, 60), np.full(60, 2.0), np.full(60, 1.5)])
    samples = samples_from(positions, ranges_to(positions, WALL_ANCHOR))
    estimate = run_fixed_window(samples, window=30)
    assert not estimate.converged or estimate.error_to(WALL_ANCHOR) > 1.0


def test_filter_samples_drops_spikes(box_samples):
    spiked = list(box_samples)
    spiked[10] = samples_from([spiked[10].tag_pos], [spiked[10].range + 50.0], t0=spiked[10].t)[0]
    kept = filter_samples(spiked)
    assert len(kept) == len(box_samples) - 1
    assert spiked[10] not in kept
