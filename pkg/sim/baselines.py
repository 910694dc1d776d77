"""Initialization strategies the PDOP trigger is compared against."""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from UWBInit import filter as range_filter
from UWBInit.errors import DegenerateGeometryError, InsufficientSamplesError
from UWBInit.filter import FilterConfig, FilterState
from UWBInit.solver import (
    MIN_SOLVER_SAMPLES,
    AnchorEstimate,
    KernelMode,
    SolverConfig,
    estimate_anchor,
    range_residuals,
)
from UWBInit.types import SyncedSample, stack_samples

logger = logging.getLogger(__name__)


def filter_samples(samples: Sequence[SyncedSample], cfg: FilterConfig = FilterConfig()) -> list:
    """Runs the triangle-rule filter over a whole stream and keeps the accepted samples."""
    state = FilterState()
    accepted = []
    for sample in samples:
        state, ok = range_filter.ingest(state, sample, cfg)
        if ok:
            accepted.append(sample)
    return accepted


def run_fixed_window(samples: Sequence[SyncedSample], window: Optional[int] = None,
                     filter_cfg: FilterConfig = FilterConfig(),
                     kernel_mode: KernelMode = KernelMode.none(),
                     solver_cfg: SolverConfig = SolverConfig()) -> AnchorEstimate:
    """Initializes from the first `window` accepted samples whatever their geometry.

    Args:
        samples: synchronized samples of one anchor, unfiltered
        window: number of accepted samples to use, None for all of them
        filter_cfg: triangle-rule threshold
        kernel_mode: refinement kernel, the same one the PDOP trigger uses for a fair comparison
        solver_cfg: LM settings
    Returns:
        the estimate; rank-deficient geometry yields `converged=False` instead of an error
    """
    accepted = filter_samples(samples, filter_cfg)
    if window is not None:
        if window < MIN_SOLVER_SAMPLES:
            raise ValueError(f"`window` should be >= {MIN_SOLVER_SAMPLES}, got {window}")
        if window > len(accepted):
            warnings.warn(f"fixed window of {window} samples exceeds the {len(accepted)} accepted, using all of them")
        else:
            accepted = accepted[:window]
    return estimate_anchor(accepted, kernel_mode, solver_cfg, allow_rank_deficient=True)


def ransac_iterations(p: float, s: int, e: float) -> int:
    """Rounds needed to draw one outlier-free subset of size `s` with probability `p`.

    Args:
        p: success probability, 0 < p < 1
        s: subset size, >= 1
        e: outlier fraction, 0 <= e < 1
    Returns:
        ceil(log(1 - p) / log(1 - (1 - e)^s)), at least 1
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"`p` should be in (0, 1), got {p}")
    if not 0.0 <= e < 1.0:
        raise ValueError(f"`e` should be in [0, 1), got {e}")
    if s < 1:
        raise ValueError(f"`s` should be >= 1, got {s}")
    clean = (1.0 - e) ** s
    if clean >= 1.0:
        return 1
    if clean <= 0.0:
        raise ValueError(f"probability of a clean subset underflows for s={s}, e={e}")
    return max(1, math.ceil(math.log(1.0 - p) / math.log1p(-clean)))


@dataclass(frozen=True)
class RansacParams:
    p: float = 0.95
    s: int = 60
    e: float = 0.1
    # None resolves to 3 sigma_d in the Monte Carlo harness
    inlier_threshold: Optional[float] = None
    max_rounds: Optional[int] = None
    seed: int = 0

    def rounds(self) -> int:
        n = ransac_iterations(self.p, self.s, self.e)
        return n if self.max_rounds is None else min(n, self.max_rounds)


def ransac_consensus(samples: Sequence[SyncedSample], params: RansacParams,
                     solver_cfg: SolverConfig = SolverConfig()) -> Tuple[AnchorEstimate, np.ndarray]:
    """Hypothesise-and-verify over random subsets, then refit on the largest consensus set.

    Returns:
        (estimate, inlier mask over `samples`); the estimate is flagged
        `converged=False` when no consensus set reached `params.s` samples
    """
    if params.s < MIN_SOLVER_SAMPLES:
        raise ValueError(f"RANSAC subset size should be >= {MIN_SOLVER_SAMPLES}, got {params.s}")
    if params.inlier_threshold is None or not params.inlier_threshold > 0.0:
        raise ValueError(f"`inlier_threshold` should be positive, got {params.inlier_threshold}")
    n = len(samples)
    if n < params.s:
        raise InsufficientSamplesError(params.s, n)

    _, positions, ranges = stack_samples(samples)
    rng = np.random.default_rng(params.seed)
    best_mask = None
    best_count = -1
    rounds = params.rounds()
    for _ in range(rounds):
        subset = np.sort(rng.choice(n, size=params.s, replace=False))
        try:
            hypothesis = estimate_anchor([samples[i] for i in subset], KernelMode.none(), solver_cfg)
        except DegenerateGeometryError:
            continue
        mask = np.abs(range_residuals(positions, ranges, hypothesis.position, hypothesis.bias)) < params.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_mask, best_count = mask, count

    if best_mask is None:
        raise DegenerateGeometryError(0)
    logger.debug(f"RANSAC: best consensus {best_count}/{n} after {rounds} rounds")

    consensus = [samples[i] for i in np.flatnonzero(best_mask)]
    if best_count < max(params.s, MIN_SOLVER_SAMPLES):
        logger.warning(f"RANSAC consensus of {best_count} samples is below the subset size {params.s}")
        # too few inliers to refit: fall back to the full set and flag it
        estimate = estimate_anchor(list(samples), KernelMode.none(), solver_cfg, allow_rank_deficient=True)
        estimate.converged = False
        return estimate, best_mask
    return estimate_anchor(consensus, KernelMode.none(), solver_cfg, allow_rank_deficient=True), best_mask


def run_ransac(samples: Sequence[SyncedSample], params: RansacParams,
               solver_cfg: SolverConfig = SolverConfig()) -> AnchorEstimate:
    estimate, _ = ransac_consensus(samples, params, solver_cfg)
    return estimate
