"""Monte Carlo comparison of initialization strategies on identical simulated data.

Every run draws one trajectory, one anchor layout and one range stream per
anchor from seeds derived from `base_seed + run_index`, then hands exactly
the same streams to every strategy.
"""

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from UWBInit.errors import DegenerateGeometryError, InsufficientSamplesError
from UWBInit.geometry import distance_condition_holds, pdop_true
from UWBInit.initializer import AnchorManager, EventKind, Phase, PipelineConfig, PoseBuffer
from UWBInit.pdop_ops import estimate_pdop
from UWBInit.solver import KernelMode, estimate_anchor
from eval.eval import eval_strategy
from sim.baselines import RansacParams, filter_samples, run_fixed_window, run_ransac
from sim.ranges import NoiseModel, RangeStream, gen_ranges
from sim.trajectories import TrajectorySpec, gen_trajectory, place_anchors

logger = logging.getLogger(__name__)

CONSERVATIVE_TOLERANCE = 1e-9
SWEEP_COLUMNS = ("run", "n", "pdop_true", "pdop_closest", "pdop_ls", "pdop_nls", "error_m")


@dataclass(frozen=True)
class PdopTriggered:
    name: str = "Our"


@dataclass(frozen=True)
class FixedWindow:
    # None uses every accepted sample of the trajectory
    window: Optional[int] = None
    name: str = "Fixed"


@dataclass(frozen=True)
class Ransac:
    p: float = 0.95
    s: int = 60
    e: float = 0.1
    # None resolves to 3 sigma_d
    inlier_threshold: Optional[float] = None
    max_rounds: Optional[int] = None
    name: str = "RANSAC"


Strategy = Union[PdopTriggered, FixedWindow, Ransac]


@dataclass(frozen=True)
class MCConfig:
    runs: int = 100
    strategies: Tuple[Strategy, ...] = (FixedWindow(), PdopTriggered())
    noise: NoiseModel = NoiseModel()
    trajectory: TrajectorySpec = TrajectorySpec()
    # fixed anchor layout; None draws `n_anchors` wall-mounted anchors per run
    anchors: Optional[Tuple[Tuple[float, float, float], ...]] = None
    n_anchors: int = 30
    base_seed: int = 0
    pipeline: PipelineConfig = PipelineConfig()
    scenario: str = "custom"
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError(f"`runs` should be >= 1, got {self.runs}")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        names = [s.name for s in self.strategies]
        if len(set(names)) != len(names):
            raise ValueError(f"strategy names should be unique, got {names}")
        if self.base_seed < 0:
            raise ValueError(f"`base_seed` should be >= 0, got {self.base_seed}")
        if self.anchors is None and self.n_anchors < 1:
            raise ValueError(f"`n_anchors` should be >= 1, got {self.n_anchors}")
        if self.workers < 1:
            raise ValueError(f"`workers` should be >= 1, got {self.workers}")


@dataclass
class RunOutcome:
    run_index: int
    # strategy name -> per-anchor error, None where the strategy did not initialize
    errors: Dict[str, List[Optional[float]]]
    checksums: Dict[str, str]
    conservative_violations: int = 0


@dataclass
class MCReport:
    scenario: str
    runs: int
    base_seed: int
    rows: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "runs": self.runs, "base_seed": self.base_seed, "rows": self.rows}


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def anchor_id(index: int) -> str:
    return f"a{index:02d}"


def stream_digest(streams: Sequence[Tuple[np.ndarray, np.ndarray]]) -> str:
    """sha256 over the (t, d) arrays a strategy consumed, in anchor order."""
    h = hashlib.sha256()
    for k, (t, d) in enumerate(streams):
        h.update(k.to_bytes(4, "little"))
        h.update(np.ascontiguousarray(t, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(d, dtype=np.float64).tobytes())
    return h.hexdigest()


def inlier_threshold(cfg: MCConfig, strategy: Ransac) -> float:
    if strategy.inlier_threshold is not None:
        return strategy.inlier_threshold
    return 3.0 * (cfg.noise.sigma_d if cfg.noise.sigma_d > 0.0 else cfg.pipeline.kernel_scale)


def simulate_inputs(cfg: MCConfig, run_index: int) -> Tuple[PoseBuffer, np.ndarray, List[RangeStream]]:
    """Trajectory, anchors and per-anchor range streams of one run."""
    run_seed = cfg.base_seed + run_index
    poses = gen_trajectory(cfg.trajectory, seed=derive_seed(run_seed, 0))
    if cfg.anchors is not None:
        anchors = np.asarray(cfg.anchors, dtype=np.float64).reshape(-1, 3)
    else:
        anchors = place_anchors(cfg.trajectory, cfg.n_anchors, seed=derive_seed(run_seed, 1))
    period = 1.0 / cfg.trajectory.rate
    streams = []
    for k, anchor in enumerate(anchors):
        # distinct sub-period offsets so ranges fall between poses
        offset = (k % 9 + 1) / 10.0 * period
        streams.append(gen_ranges(poses, anchor, cfg.noise, offset=offset,
                                  seed=derive_seed(cfg.noise.seed, run_seed, 2, k)))
    return poses, anchors, streams


def _run_pdop_triggered(cfg: MCConfig, poses: PoseBuffer, anchors: np.ndarray,
                        streams: List[RangeStream]) -> Tuple[List[Optional[float]], str, int]:
    pipeline = cfg.pipeline
    messages = sorted(
        ((float(t), k, float(d)) for k, stream in enumerate(streams) for t, d in zip(stream.t, stream.d)),
        key=lambda m: (m[0], m[1]),
    )
    manager = AnchorManager(poses, pipeline)
    consumed = [([], []) for _ in streams]
    violations = 0
    for t, k, d in messages:
        consumed[k][0].append(t)
        consumed[k][1].append(d)
        for event in manager.ingest(t, anchor_id(k), d):
            if event.kind != EventKind.INITIALIZED:
                continue
            session = manager.sessions[event.anchor_id]
            buffered = list(session.buffer)
            if distance_condition_holds(buffered, anchors[k]):
                if session.pdop_at_init < pdop_true(buffered, anchors[k]) - CONSERVATIVE_TOLERANCE:
                    violations += 1
                    logger.warning(f"closest-point PDOP below the true PDOP for anchor {event.anchor_id} at t={t}")
    sessions = manager.finish()

    errors = []
    for k, anchor in enumerate(anchors):
        session = sessions.get(anchor_id(k))
        if session is not None and session.phase == Phase.INITIALIZED:
            errors.append(session.estimate.error_to(anchor))
        else:
            errors.append(None)
    return errors, stream_digest(consumed), violations


def _synced_streams(cfg: MCConfig, poses: PoseBuffer, streams: List[RangeStream]) -> list:
    return [stream.synced(poses, cfg.pipeline.trigger.pose_max_gap) for stream in streams]


def _samples_digest(per_anchor: list) -> str:
    return stream_digest([([s.t for s in samples], [s.range for s in samples]) for samples in per_anchor])


def _run_fixed_window(cfg: MCConfig, strategy: FixedWindow, anchors: np.ndarray,
                      per_anchor: list) -> List[Optional[float]]:
    kernel = KernelMode.adaptive(cfg.pipeline.kernel_scale)
    errors = []
    for anchor, samples in zip(anchors, per_anchor):
        try:
            estimate = run_fixed_window(samples, strategy.window, cfg.pipeline.filter, kernel, cfg.pipeline.solver)
        except InsufficientSamplesError:
            errors.append(None)
            continue
        errors.append(estimate.error_to(anchor))
    return errors


def _run_ransac(cfg: MCConfig, strategy: Ransac, anchors: np.ndarray, per_anchor: list,
                run_index: int) -> List[Optional[float]]:
    threshold = inlier_threshold(cfg, strategy)
    errors = []
    for k, (anchor, samples) in enumerate(zip(anchors, per_anchor)):
        params = RansacParams(strategy.p, strategy.s, strategy.e, threshold, strategy.max_rounds,
                              seed=derive_seed(cfg.base_seed + run_index, 3, k))
        try:
            estimate = run_ransac(samples, params, cfg.pipeline.solver)
        except (InsufficientSamplesError, DegenerateGeometryError):
            errors.append(None)
            continue
        errors.append(estimate.error_to(anchor))
    return errors


def simulate_run(cfg: MCConfig, run_index: int) -> RunOutcome:
    """One Monte Carlo run: every strategy on the same simulated data."""
    poses, anchors, streams = simulate_inputs(cfg, run_index)
    per_anchor = None
    outcome = RunOutcome(run_index, {}, {})
    for strategy in cfg.strategies:
        if isinstance(strategy, PdopTriggered):
            errors, digest, violations = _run_pdop_triggered(cfg, poses, anchors, streams)
            outcome.conservative_violations += violations
        else:
            if per_anchor is None:
                per_anchor = _synced_streams(cfg, poses, streams)
            digest = _samples_digest(per_anchor)
            if isinstance(strategy, FixedWindow):
                errors = _run_fixed_window(cfg, strategy, anchors, per_anchor)
            elif isinstance(strategy, Ransac):
                errors = _run_ransac(cfg, strategy, anchors, per_anchor, run_index)
            else:
                raise NotImplementedError(f"Unknown strategy {strategy!r}")
        outcome.errors[strategy.name] = errors
        outcome.checksums[strategy.name] = digest
    return outcome


def _collect(cfg: MCConfig, desc: str) -> List[RunOutcome]:
    worker = partial(simulate_run, cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(tqdm(pool.map(worker, range(cfg.runs)), total=cfg.runs, desc=desc))
    else:
        outcomes = [worker(i) for i in tqdm(range(cfg.runs), desc=desc)]
    return sorted(outcomes, key=lambda o: o.run_index)


def run_mc(cfg: MCConfig) -> MCReport:
    """Runs every strategy on `cfg.runs` simulated runs and reduces them to comparison table rows.

    Args:
        cfg: runs, strategies, noise, trajectory and pipeline settings
    Returns:
        MCReport with one row per strategy, in `cfg.strategies` order
    """
    outcomes = _collect(cfg, desc=f"MC {cfg.scenario}")
    report = MCReport(cfg.scenario, cfg.runs, cfg.base_seed)
    for strategy in cfg.strategies:
        errors = [e for outcome in outcomes for e in outcome.errors[strategy.name]]
        row = {"scenario": cfg.scenario}
        row.update(eval_strategy(strategy.name, errors))
        h = hashlib.sha256()
        for outcome in outcomes:
            h.update(outcome.checksums[strategy.name].encode())
        row["stream_checksum"] = h.hexdigest()
        if isinstance(strategy, PdopTriggered):
            row["conservative_violations"] = sum(o.conservative_violations for o in outcomes)
        report.rows.append(row)
    logger.info(f"scenario {cfg.scenario}: {cfg.runs} runs, {len(cfg.strategies)} strategies")
    return report


def _sweep_run(cfg: MCConfig, anchor_index: int, step: int, min_n: int, run_index: int) -> List[dict]:
    poses, anchors, streams = simulate_inputs(cfg, run_index)
    if not 0 <= anchor_index < len(anchors):
        raise ValueError(f"anchor index {anchor_index} out of range for {len(anchors)} anchors")
    anchor = anchors[anchor_index]
    samples = filter_samples(streams[anchor_index].synced(poses, cfg.pipeline.trigger.pose_max_gap),
                             cfg.pipeline.filter)
    kernel = KernelMode.adaptive(cfg.pipeline.kernel_scale)
    rows = []
    for n in range(min_n, len(samples) + 1, step):
        prefix = samples[:n]
        try:
            error = estimate_anchor(prefix, kernel, cfg.pipeline.solver).error_to(anchor)
        except DegenerateGeometryError:
            error = float("nan")
        rows.append({
            "run": run_index,
            "n": n,
            "pdop_true": estimate_pdop(prefix, "true", anchor=anchor),
            "pdop_closest": estimate_pdop(prefix, "closest_point"),
            "pdop_ls": estimate_pdop(prefix, "ls"),
            "pdop_nls": estimate_pdop(prefix, "nls", solver_cfg=cfg.pipeline.solver),
            "error_m": error,
        })
    if not rows:
        logger.info(f"run {run_index}: anchor {anchor_index} has only {len(samples)} accepted samples, nothing to sweep")
    return rows


def run_prefix_sweep(cfg: MCConfig, anchor_index: int = 0, step: int = 10, min_n: int = 10) -> List[dict]:
    """PDOP estimators and initialization error on growing prefixes of one anchor's accepted stream.

    Args:
        cfg: simulation settings, strategies are ignored
        anchor_index: which anchor of each run to follow
        step: prefix growth between rows
        min_n: first prefix length, at least 5
    Returns:
        rows keyed by SWEEP_COLUMNS, ordered by run then prefix length
    """
    if min_n < 5 or step < 1:
        raise ValueError(f"`min_n` should be >= 5 and `step` >= 1, got {min_n} and {step}")
    rows = []
    for run_index in tqdm(range(cfg.runs), desc="prefix sweep"):
        rows.extend(_sweep_run(cfg, anchor_index, step, min_n, run_index))
    return rows
