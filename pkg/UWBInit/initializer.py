"""Per-anchor lifecycle: discovery, filtering, buffering, PDOP-triggered initialization.

Every range message goes through the same steps:

    interpolate tag position -> triangle-rule filter -> buffer + streaming PDOP
    -> (Collecting and enough samples and PDOP < threshold) -> LS + adaptive LM
    -> PDOP at the solved anchor < threshold -> Initialized

The trigger counts the range bias as a fourth unknown by default: along a
straight pass the along-track anchor coordinate and the bias trade off, which
the position-only PDOP cannot see. An attempt whose solved anchor fails the
PDOP check leaves the session Collecting for `retry_every` accepted samples.

A session that is initialized keeps filtering and buffering so its estimate can
optionally be re-refined every `rerefine_every` accepted samples.
"""

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import filter as range_filter
from .errors import (
    DegenerateDirectionError,
    DegenerateGeometryError,
    DivergedError,
    InterpolationError,
    NoBracketingPosesError,
    OutOfOrderError,
    PoseGapError,
)
from .filter import FilterConfig, FilterState
from .geometry import ClosestPointTracker, GeometrySummary, evict_oldest, pdop_at, summary_pdop, update_summary
from .solver import AnchorEstimate, KernelMode, SolverConfig, estimate_anchor, refine
from .types import SyncedSample, as_vec3

logger = logging.getLogger(__name__)


class Phase(str, enum.Enum):
    COLLECTING = "Collecting"
    INITIALIZED = "Initialized"
    DEGENERATE = "Degenerate"


class EventKind(str, enum.Enum):
    NONE = "none"
    DROPPED = "dropped"
    REJECTED = "rejected"
    PDOP_UPDATED = "pdop_updated"
    INITIALIZED = "initialized"


@dataclass(frozen=True)
class TriggerConfig:
    pdop_threshold: float = 1.0
    min_samples: int = 10
    max_buffer: int = 10000
    pose_max_gap: float = 1.0
    # 0 keeps the estimate fixed after initialization
    rerefine_every: int = 0
    # gate on the position block of the PDOP with the range bias as a fourth unknown
    bias_aware: bool = True
    # re-evaluate the PDOP at the solved anchor before declaring it initialized
    verify_at_estimate: bool = True
    # accepted samples to wait after an attempt that did not initialize
    retry_every: int = 20

    def __post_init__(self):
        if not self.pdop_threshold > 0.0:
            raise ValueError(f"`pdop_threshold` should be positive, got {self.pdop_threshold}")
        if self.min_samples < 4:
            raise ValueError(f"`min_samples` should be >= 4, got {self.min_samples}")
        if self.max_buffer < self.min_samples:
            raise ValueError(f"`max_buffer` ({self.max_buffer}) should be >= `min_samples` ({self.min_samples})")
        if self.rerefine_every < 0:
            raise ValueError(f"`rerefine_every` should be >= 0, got {self.rerefine_every}")
        if self.retry_every < 1:
            raise ValueError(f"`retry_every` should be >= 1, got {self.retry_every}")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a session needs; `kernel_scale` is the adaptive kernel's c."""
    trigger: TriggerConfig = TriggerConfig()
    filter: FilterConfig = FilterConfig()
    solver: SolverConfig = SolverConfig()
    kernel_scale: float = 0.1


class PoseBuffer:
    """Append-only, strictly time-ordered tag positions.

    Readers interpolate against a consistent prefix: arrays are materialised
    lazily and only grow.
    """

    def __init__(self, t=None, positions=None):
        self._t: List[float] = []
        self._p: List[np.ndarray] = []
        self._cache: Optional[Tuple[np.ndarray, np.ndarray]] = None
        if t is not None:
            t = np.asarray(t, dtype=np.float64)
            positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
            if t.shape[0] != positions.shape[0]:
                raise ValueError(f"{t.shape[0]} timestamps but {positions.shape[0]} positions")
            if t.size > 1 and not np.all(np.diff(t) > 0.0):
                bad = int(np.flatnonzero(np.diff(t) <= 0.0)[0])
                raise OutOfOrderError(float(t[bad]), float(t[bad + 1]))
            self._t = t.tolist()
            self._p = list(positions)
            self._cache = (t.copy(), positions.copy())

    def __len__(self) -> int:
        return len(self._t)

    def append(self, t: float, position) -> None:
        t = float(t)
        if self._t and t <= self._t[-1]:
            raise OutOfOrderError(self._t[-1], t)
        self._t.append(t)
        self._p.append(as_vec3(position))
        self._cache = None

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._cache is None:
            self._cache = (np.asarray(self._t, dtype=np.float64), np.asarray(self._p, dtype=np.float64).reshape(-1, 3))
        return self._cache

    @property
    def times(self) -> np.ndarray:
        return self.arrays()[0]

    @property
    def positions(self) -> np.ndarray:
        return self.arrays()[1]


def interpolate(poses: PoseBuffer, t: float, max_gap: float) -> np.ndarray:
    """Linear interpolation of the tag position at `t` between bracketing poses."""
    if len(poses) == 0:
        raise ValueError("empty pose buffer")
    times, positions = poses.arrays()
    if t < times[0] or t > times[-1]:
        raise NoBracketingPosesError(t, float(times[0]), float(times[-1]))
    i = int(np.searchsorted(times, t, side="left"))
    if times[i] == t:
        return positions[i].copy()
    gap = float(times[i] - times[i - 1])
    if gap > max_gap:
        raise PoseGapError(t, gap, max_gap)
    w = (t - times[i - 1]) / gap
    return (1.0 - w) * positions[i - 1] + w * positions[i]


@dataclass
class AnchorSession:
    anchor_id: str
    phase: Phase = Phase.COLLECTING
    buffer: deque = field(default_factory=deque)
    filter_state: FilterState = field(default_factory=FilterState)
    tracker: ClosestPointTracker = field(default_factory=ClosestPointTracker)
    summary: GeometrySummary = field(default_factory=GeometrySummary)
    current_pdop: float = float("inf")
    # the value the trigger compares, equal to current_pdop unless bias-aware
    trigger_pdop: float = float("inf")
    estimate: Optional[AnchorEstimate] = None
    t_init: Optional[float] = None
    pdop_at_init: Optional[float] = None
    n_used: int = 0
    n_dropped: int = 0
    n_evicted: int = 0
    since_refine: int = 0
    n_attempts: int = 0
    retry_wait: int = 0


@dataclass(frozen=True)
class SessionEvent:
    anchor_id: str
    t: float
    kind: EventKind
    pdop: float

    def to_dict(self) -> dict:
        return {"anchor_id": self.anchor_id, "t": self.t, "kind": self.kind.value, "pdop": self.pdop}


def _pdop_at_estimate(samples: List[SyncedSample], estimate: AnchorEstimate, with_bias: bool) -> float:
    try:
        return pdop_at(samples, estimate.position, with_bias)
    except DegenerateDirectionError:
        return float("inf")


def _initialize(session: AnchorSession, t: float, cfg: PipelineConfig) -> bool:
    samples = list(session.buffer)
    session.n_attempts += 1
    session.retry_wait = cfg.trigger.retry_every
    try:
        estimate = estimate_anchor(samples, KernelMode.adaptive(cfg.kernel_scale), cfg.solver)
    except DegenerateGeometryError as exc:
        # PDOP passed but the differenced system did not; wait for more data
        logger.warning(f"anchor {session.anchor_id}: {exc}, staying in {session.phase.value}")
        return False
    if cfg.trigger.verify_at_estimate:
        solved_pdop = _pdop_at_estimate(samples, estimate, cfg.trigger.bias_aware)
        if not solved_pdop < cfg.trigger.pdop_threshold:
            logger.info(
                f"anchor {session.anchor_id}: PDOP {solved_pdop:.3f} at the solved position "
                f"{np.round(estimate.position, 3).tolist()} (bias {estimate.bias:.3f}), "
                f"retrying after {cfg.trigger.retry_every} more samples"
            )
            return False
    session.retry_wait = 0
    session.estimate = estimate
    session.phase = Phase.INITIALIZED
    session.t_init = t
    session.pdop_at_init = session.current_pdop
    session.n_used = len(samples)
    session.since_refine = 0
    logger.info(
        f"anchor {session.anchor_id} initialized at t={t:.3f} with PDOP {session.current_pdop:.3f} "
        f"from {len(samples)} samples: position {np.round(estimate.position, 3).tolist()}, bias {estimate.bias:.3f}"
    )
    return True


def ingest_range(session: AnchorSession, poses: PoseBuffer, t: float, d: float,
                 cfg: PipelineConfig = PipelineConfig()) -> Tuple[AnchorSession, EventKind]:
    """Feeds one range measurement into an anchor session.

    Args:
        session: a Collecting or Initialized session, updated in place
        poses: robot-derived tag positions
        t: measurement timestamp, seconds
        d: measured range, meters
        cfg: trigger, filter and solver settings
    Returns:
        (session, event)
    """
    if session.phase == Phase.DEGENERATE:
        raise ValueError(f"anchor {session.anchor_id} is closed (Degenerate), no further ranges accepted")

    try:
        sample = SyncedSample.at_interpolated(t, interpolate(poses, t, cfg.trigger.pose_max_gap), d)
    except InterpolationError as exc:
        session.n_dropped += 1
        logger.warning(f"anchor {session.anchor_id}: dropped range at t={t}: {exc}")
        return session, EventKind.DROPPED
    except ValueError as exc:
        session.n_dropped += 1
        logger.warning(f"anchor {session.anchor_id}: dropped invalid range {d!r} at t={t}: {exc}")
        return session, EventKind.DROPPED

    session.filter_state, accepted = range_filter.ingest(session.filter_state, sample, cfg.filter)
    if not accepted:
        return session, EventKind.REJECTED

    session.tracker, session.summary, _ = update_summary(session.tracker, session.summary, sample, session.buffer)
    session.buffer.append(sample)
    if len(session.buffer) > cfg.trigger.max_buffer:
        evicted = session.buffer.popleft()
        session.n_evicted += 1
        session.tracker, session.summary, _ = evict_oldest(session.tracker, session.summary, evicted, session.buffer)
    session.current_pdop = summary_pdop(session.summary)
    if cfg.trigger.bias_aware:
        session.trigger_pdop = summary_pdop(session.summary, with_bias=True)
    else:
        session.trigger_pdop = session.current_pdop

    if session.phase == Phase.COLLECTING:
        if session.retry_wait > 0:
            session.retry_wait -= 1
            return session, EventKind.PDOP_UPDATED
        ready = len(session.buffer) >= cfg.trigger.min_samples and session.trigger_pdop < cfg.trigger.pdop_threshold
        if ready and _initialize(session, t, cfg):
            return session, EventKind.INITIALIZED
        return session, EventKind.PDOP_UPDATED

    session.since_refine += 1
    if cfg.trigger.rerefine_every and session.since_refine >= cfg.trigger.rerefine_every:
        session.since_refine = 0
        samples = list(session.buffer)
        try:
            session.estimate = refine(samples, session.estimate, KernelMode.adaptive(cfg.kernel_scale), cfg.solver)
        except DivergedError as exc:
            logger.warning(f"anchor {session.anchor_id}: re-refinement {exc}, keeping the previous estimate")
            return session, EventKind.PDOP_UPDATED
        session.n_used = len(samples)
        logger.debug(f"anchor {session.anchor_id} re-refined on {len(samples)} samples")
    return session, EventKind.PDOP_UPDATED


def finish_session(session: AnchorSession) -> AnchorSession:
    """Closes a session at stream end; still-infinite PDOP marks it Degenerate."""
    if session.phase == Phase.COLLECTING and not np.isfinite(session.current_pdop):
        session.phase = Phase.DEGENERATE
        logger.info(f"anchor {session.anchor_id} closed as Degenerate after {len(session.buffer)} samples")
    elif session.phase == Phase.COLLECTING:
        logger.info(
            f"anchor {session.anchor_id} not initialized: final PDOP {session.current_pdop:.3f} "
            f"after {len(session.buffer)} samples"
        )
    return session


def manager_ingest(sessions: Dict[str, AnchorSession], poses: PoseBuffer, t: float, anchor_id: str, d: float,
                   cfg: PipelineConfig = PipelineConfig()) -> Tuple[Dict[str, AnchorSession], List[SessionEvent]]:
    """Routes one message to its anchor session, creating the session on first sight."""
    anchor_id = str(anchor_id)
    events = []
    session = sessions.get(anchor_id)
    if session is None:
        session = AnchorSession(anchor_id)
        sessions[anchor_id] = session
        logger.info(f"discovered anchor {anchor_id} at t={t}")
    session, kind = ingest_range(session, poses, t, d, cfg)
    events.append(SessionEvent(anchor_id, float(t), kind, session.current_pdop))
    return sessions, events


class AnchorManager:
    """Stateful wrapper around `manager_ingest` for replaying a merged range stream."""

    def __init__(self, poses: PoseBuffer, cfg: PipelineConfig = PipelineConfig()):
        self.poses = poses
        self.cfg = cfg
        self.sessions: Dict[str, AnchorSession] = {}
        self.events: List[SessionEvent] = []

    def ingest(self, t: float, anchor_id: str, d: float) -> List[SessionEvent]:
        self.sessions, events = manager_ingest(self.sessions, self.poses, t, anchor_id, d, self.cfg)
        self.events.extend(events)
        return events

    def finish(self) -> Dict[str, AnchorSession]:
        for session in self.sessions.values():
            finish_session(session)
        return self.sessions
