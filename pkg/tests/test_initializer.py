import math
import time

import numpy as np
import pytest

from conftest import WALL_ANCHOR, line_poses
from UWBInit.errors import DivergedError, NoBracketingPosesError, OutOfOrderError, PoseGapError
from UWBInit.geometry import pdop_closest_point
from UWBInit.initializer import (
    AnchorManager,
    AnchorSession,
    EventKind,
    Phase,
    PipelineConfig,
    PoseBuffer,
    TriggerConfig,
    finish_session,
    ingest_range,
    interpolate,
    manager_ingest,
)
from sim.trajectories import TrajectorySpec, gen_trajectory

BOX = TrajectorySpec(kind="waypoint_box", extents=(4.0, 6.5, 7.0), duration=60.0, rate=10.0, waypoint_count=8)


def _box_poses(seed=0):
    return gen_trajectory(BOX, seed=seed)


def _true_ranges(poses, anchor):
    return np.linalg.norm(poses.positions - np.asarray(anchor)[None, :], axis=1)


def _replay(manager, messages):
    events = []
    for t, aid, d in messages:
        events.extend(manager.ingest(t, aid, d))
    return events


## pose interpolation

def test_interpolate_midpoint_and_exact_hit():
    poses = PoseBuffer([0.0, 1.0], [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    np.testing.assert_allclose(interpolate(poses, 0.5, max_gap=1.0), [1.0, 0.0, 0.0])
    hit = interpolate(poses, 1.0, max_gap=1.0)
    np.testing.assert_array_equal(hit, [2.0, 0.0, 0.0])
    hit[0] = 99.0
    assert poses.positions[1, 0] == 2.0


def test_interpolate_errors():
    poses = PoseBuffer([0.0, 1.0], [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(NoBracketingPosesError):
        interpolate(poses, 1.5, max_gap=1.0)
    with pytest.raises(NoBracketingPosesError):
        interpolate(poses, -0.1, max_gap=1.0)
    gappy = PoseBuffer([0.0, 5.0], [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(PoseGapError):
        interpolate(gappy, 2.5, max_gap=1.0)
    with pytest.raises(ValueError):
        interpolate(PoseBuffer(), 0.0, max_gap=1.0)


def test_pose_buffer_is_strictly_ordered():
    poses = PoseBuffer()
    poses.append(0.0, [0.0, 0.0, 0.0])
    poses.append(0.1, [0.1, 0.0, 0.0])
    assert len(poses) == 2
    with pytest.raises(OutOfOrderError):
        poses.append(0.1, [0.2, 0.0, 0.0])
    with pytest.raises(OutOfOrderError):
        PoseBuffer([0.0, 0.2, 0.2], np.zeros((3, 3)))
    poses.append(0.3, [0.3, 0.0, 0.0])
    np.testing.assert_allclose(interpolate(poses, 0.2, max_gap=1.0), [0.2, 0.0, 0.0])


## single anchor

def test_well_conditioned_trajectory_initializes():
    poses = _box_poses()
    session = AnchorSession("a00")
    events = []
    for t, d in zip(poses.times, _true_ranges(poses, WALL_ANCHOR)):
        session, kind = ingest_range(session, poses, t, d)
        events.append(kind)
    assert events.count(EventKind.INITIALIZED) == 1
    assert session.phase == Phase.INITIALIZED
    assert session.pdop_at_init < 1.0
    assert session.n_used >= TriggerConfig().min_samples
    assert session.estimate.error_to(WALL_ANCHOR) < 1e-3
    # buffering continues after initialization
    assert len(session.buffer) == len(poses)


def test_collinear_trajectory_never_initializes():
    poses = line_poses([0.0, 2.0, 1.5], [30.0, 2.0, 1.5])
    anchor = [15.0, 0.0, 2.2]
    session = AnchorSession("a00")
    for t, d in zip(poses.times, _true_ranges(poses, anchor)):
        session, kind = ingest_range(session, poses, t, d)
        assert kind == EventKind.PDOP_UPDATED
    assert session.phase == Phase.COLLECTING
    assert session.current_pdop == math.inf
    finish_session(session)
    assert session.phase == Phase.DEGENERATE
    with pytest.raises(ValueError):
        ingest_range(session, poses, poses.times[-1] + 1.0, 5.0)


def test_outlier_is_rejected_and_not_buffered():
    poses = _box_poses()
    ranges = _true_ranges(poses, WALL_ANCHOR)
    session = AnchorSession("a00")
    for t, d in zip(poses.times[:5], ranges[:5]):
        session, _ = ingest_range(session, poses, t, d)
    before = len(session.buffer)
    session, kind = ingest_range(session, poses, poses.times[5], ranges[5] + 5.0)
    assert kind == EventKind.REJECTED
    assert len(session.buffer) == before
    assert session.filter_state.rejected == 1


def test_unusable_messages_are_dropped():
    poses = _box_poses()
    session = AnchorSession("a00")
    session, kind = ingest_range(session, poses, poses.times[-1] + 0.5, 3.0)
    assert kind == EventKind.DROPPED
    for bad in (0.0, -1.0, float("nan")):
        session, kind = ingest_range(session, poses, poses.times[3], bad)
        assert kind == EventKind.DROPPED
    assert session.n_dropped == 4
    assert len(session.buffer) == 0 and session.filter_state.total == 0


def test_bounded_buffer_tracks_batch_pdop():
    poses = _box_poses(seed=3)
    cfg = PipelineConfig(trigger=TriggerConfig(min_samples=10, max_buffer=50))
    session = AnchorSession("a00")
    for t, d in zip(poses.times, _true_ranges(poses, WALL_ANCHOR)):
        session, _ = ingest_range(session, poses, t, d, cfg)
        assert len(session.buffer) <= 50
    assert session.n_evicted == len(poses) - 50
    assert session.current_pdop == pytest.approx(pdop_closest_point(list(session.buffer)), rel=1e-6)


def test_rerefine_uses_the_growing_buffer():
    poses = _box_poses()
    cfg = PipelineConfig(trigger=TriggerConfig(rerefine_every=25))
    session = AnchorSession("a00")
    used = None
    for t, d in zip(poses.times, _true_ranges(poses, WALL_ANCHOR)):
        session, kind = ingest_range(session, poses, t, d, cfg)
        if kind == EventKind.INITIALIZED:
            used = session.n_used
    assert used is not None
    assert session.n_used > used
    assert session.estimate.error_to(WALL_ANCHOR) < 1e-3


def test_rerefine_divergence_keeps_the_estimate(monkeypatch):
    def diverge(*args, **kwargs):
        raise DivergedError(3)

    monkeypatch.setattr("UWBInit.initializer.refine", diverge)
    poses = _box_poses()
    cfg = PipelineConfig(trigger=TriggerConfig(rerefine_every=25))
    session = AnchorSession("a00")
    initial, used = None, None
    for t, d in zip(poses.times, _true_ranges(poses, WALL_ANCHOR)):
        session, kind = ingest_range(session, poses, t, d, cfg)
        if kind == EventKind.INITIALIZED:
            initial, used = session.estimate, session.n_used
    assert initial is not None
    assert len(session.buffer) > used + 25
    assert session.phase == Phase.INITIALIZED
    assert session.estimate is initial
    assert session.n_used == used


## trigger gate

def _run_session(poses, anchor, cfg):
    session = AnchorSession("a00")
    for t, d in zip(poses.times, _true_ranges(poses, anchor)):
        session, _ = ingest_range(session, poses, t, d, cfg)
        yield session


def test_bias_aware_gate_is_never_looser():
    poses = _box_poses(seed=5)
    t_init = {}
    for bias_aware in (True, False):
        cfg = PipelineConfig(trigger=TriggerConfig(bias_aware=bias_aware, verify_at_estimate=False))
        for session in _run_session(poses, WALL_ANCHOR, cfg):
            if math.isfinite(session.current_pdop):
                assert session.trigger_pdop >= session.current_pdop * (1.0 - 1e-9)
            if not bias_aware:
                assert session.trigger_pdop == session.current_pdop
        assert session.phase == Phase.INITIALIZED
        assert session.n_attempts == 1
        t_init[bias_aware] = session.t_init
    assert t_init[True] >= t_init[False]


def test_failed_check_at_estimate_waits_before_retrying(monkeypatch):
    monkeypatch.setattr("UWBInit.initializer.pdop_at", lambda *args, **kwargs: math.inf)
    poses = _box_poses()
    trigger = TriggerConfig()
    attempts = []
    for session in _run_session(poses, WALL_ANCHOR, PipelineConfig(trigger=trigger)):
        attempts.append(session.n_attempts)
    assert session.phase == Phase.COLLECTING
    assert session.estimate is None and session.t_init is None
    assert 1 < session.n_attempts <= len(poses) // (trigger.retry_every + 1) + 1
    # no two attempts within retry_every accepted samples
    steps = np.flatnonzero(np.diff(attempts)) + 1
    assert np.all(np.diff(steps) >= trigger.retry_every + 1)
    finish_session(session)
    assert session.phase == Phase.COLLECTING


def test_trigger_config_validation():
    with pytest.raises(ValueError):
        TriggerConfig(min_samples=3)
    with pytest.raises(ValueError):
        TriggerConfig(min_samples=20, max_buffer=10)
    with pytest.raises(ValueError):
        TriggerConfig(pdop_threshold=0.0)
    with pytest.raises(ValueError):
        TriggerConfig(retry_every=0)


## manager

def test_first_message_discovers_anchor():
    poses = _box_poses()
    sessions, events = manager_ingest({}, poses, poses.times[0], "7435", 4.0)
    assert list(sessions) == ["7435"]
    assert sessions["7435"].phase == Phase.COLLECTING
    assert [e.kind for e in events] == [EventKind.PDOP_UPDATED]


def _interleaved_messages(poses, anchors, sigma=0.0, seed=0):
    rng = np.random.default_rng(seed)
    messages = []
    for k, anchor in enumerate(anchors):
        # ranges land between poses so positions are interpolated
        times = poses.times[:-1] + (k + 1) * 0.02
        tags = np.array([interpolate(poses, t, max_gap=1.0) for t in times])
        ranges = _true_ranges(PoseBuffer(times, tags), anchor)
        if sigma:
            ranges = ranges + rng.normal(0.0, sigma, size=ranges.size)
        messages.extend((float(t), f"a{k}", float(d)) for t, d in zip(times, ranges))
    return sorted(messages, key=lambda m: (m[0], m[1]))


ANCHORS = [WALL_ANCHOR, [4.0, 1.0, 1.5], [2.0, 6.5, 3.0], [3.0, 0.0, 5.0]]


def test_interleaved_anchors_stay_separate():
    poses = _box_poses(seed=1)
    messages = _interleaved_messages(poses, ANCHORS)
    manager = AnchorManager(poses)
    _replay(manager, messages)
    sessions = manager.finish()
    assert sorted(sessions) == ["a0", "a1", "a2", "a3"]
    for aid, session in sessions.items():
        own = [d for _, m_aid, d in messages if m_aid == aid]
        assert [s.range for s in session.buffer] == own
        assert sum(e.anchor_id == aid for e in manager.events) == len(own)


def test_replay_is_deterministic():
    poses = _box_poses(seed=2)
    messages = _interleaved_messages(poses, ANCHORS, sigma=0.1, seed=5)
    first = _replay(AnchorManager(poses, PipelineConfig(kernel_scale=0.1)), messages)
    second = _replay(AnchorManager(poses, PipelineConfig(kernel_scale=0.1)), messages)
    assert first == second


def test_initialization_respects_threshold_and_sample_floor():
    poses = _box_poses(seed=4)
    messages = _interleaved_messages(poses, ANCHORS, sigma=0.1, seed=6)
    cfg = PipelineConfig(trigger=TriggerConfig(pdop_threshold=0.9, min_samples=25))
    manager = AnchorManager(poses, cfg)
    events = _replay(manager, messages)
    initialized = [e for e in events if e.kind == EventKind.INITIALIZED]
    assert initialized
    for event in initialized:
        session = manager.sessions[event.anchor_id]
        assert event.pdop < 0.9
        assert session.pdop_at_init == event.pdop
        assert session.n_used >= 25
        assert session.t_init == event.t


@pytest.mark.slow
def test_manager_throughput(record_property):
    poses = gen_trajectory(BOX, seed=8)
    messages = _interleaved_messages(poses, ANCHORS, sigma=0.1, seed=9)
    cfg = PipelineConfig(kernel_scale=0.1)
    sessions = {}
    start = time.perf_counter()
    for t, aid, d in messages:
        sessions, _ = manager_ingest(sessions, poses, t, aid, d, cfg)
    elapsed = time.perf_counter() - start
    rate = len(messages) / elapsed
    record_property("samples_per_second", round(rate))
    print(f"manager_ingest: {len(messages)} ranges in {elapsed:.3f} s ({rate:.0f} samples/s)")
    assert rate > 0.0
