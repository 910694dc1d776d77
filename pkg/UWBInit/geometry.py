"""Position dilution of precision (PDOP) for range-only anchor geometry.

Two flavours are provided:
    - the true PDOP, built from unit directions between every tag position and
      a known (or hypothesised) anchor position;
    - the closest-point PDOP, which replaces the unknown anchor with the tag
      position of the shortest measured range and drops that row. It needs no
      anchor estimate and is never smaller than the true PDOP as long as every
      tag position is at least as close to the closest point as to the anchor.

Both accept `with_bias=True`, which appends a column of ones for the constant
range bias the solver estimates alongside the anchor and reports the position
block of the 4x4 inverse. The bias column is eliminated through its Schur
complement, so the result is never smaller than the position-only PDOP.

The closest-point variant also has a streaming form (`update_summary`) that
keeps the 3x3 information matrix and the row sum up to date one sample at a time.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateDirectionError, InsufficientSamplesError, OutOfOrderError
from .types import SyncedSample, as_vec3, stack_samples

logger = logging.getLogger(__name__)

# reciprocal condition estimate below which the information matrix counts as singular
SINGULAR_RATIO = 1e-10
MIN_PDOP_SAMPLES = 4


def pdop_from_info(info: np.ndarray) -> float:
    """sqrt(trace(info^-1)) of a symmetric 3x3 matrix, +inf when near-singular.

    Uses an unrolled Cholesky factor info = L L^T, so trace(info^-1) is the
    squared Frobenius norm of L^-1. trace(info) * trace(info^-1) bounds the
    condition number within a factor of 9.
    """
    a, b, c = float(info[0, 0]), float(info[0, 1]), float(info[0, 2])
    d, e, f = float(info[1, 1]), float(info[1, 2]), float(info[2, 2])
    if not a > 0.0:
        return float("inf")
    l00 = math.sqrt(a)
    l10, l20 = b / l00, c / l00
    p11 = d - l10 * l10
    if not p11 > 0.0:
        return float("inf")
    l11 = math.sqrt(p11)
    l21 = (e - l20 * l10) / l11
    p22 = f - l20 * l20 - l21 * l21
    if not p22 > 0.0:
        return float("inf")
    l22 = math.sqrt(p22)
    # L^-1, lower triangular
    m00, m11, m22 = 1.0 / l00, 1.0 / l11, 1.0 / l22
    m10 = -l10 * m00 * m11
    m21 = -l21 * m11 * m22
    m20 = -(l20 * m00 + l21 * m10) * m22
    trace_inv = m00 * m00 + m11 * m11 + m22 * m22 + m10 * m10 + m21 * m21 + m20 * m20
    if not (a + d + f) * trace_inv * SINGULAR_RATIO < 1.0:
        return float("inf")
    return math.sqrt(trace_inv)


def bias_reduced_info(info: np.ndarray, row_sum: np.ndarray, n_rows: int) -> np.ndarray:
    """Schur complement of the bias entry of [[info, row_sum], [row_sum^T, n_rows]].

    Its inverse is the position block of the inverse of the augmented matrix.
    """
    return info - np.outer(row_sum, row_sum) / n_rows


def _pdop_of_rows(G: np.ndarray, with_bias: bool) -> float:
    if not with_bias:
        return pdop_from_info(G.T @ G)
    if G.shape[0] < MIN_PDOP_SAMPLES:
        return float("inf")
    return pdop_from_info(bias_reduced_info(G.T @ G, G.sum(axis=0), G.shape[0]))


def geometry_matrix(positions: np.ndarray, reference: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    """Rows (p_k - reference)^T / d_k."""
    return (positions - reference[None, :]) / ranges[:, None]


def pdop_true(samples: Sequence[SyncedSample], anchor, with_bias: bool = False) -> float:
    """PDOP of the samples seen from a known anchor position.

    Args:
        samples: synchronized samples, at least one
        anchor: anchor position (3,)
        with_bias: also count the constant range bias as an unknown
    Returns:
        sqrt(trace((G^T G)^-1)), or +inf when G^T G is (near) singular
    """
    if len(samples) == 0:
        raise InsufficientSamplesError(1, 0)
    anchor = as_vec3(anchor)
    _, positions, ranges = stack_samples(samples)
    dist = np.linalg.norm(positions - anchor[None, :], axis=1)
    coincident = np.flatnonzero(dist <= 1e-12)
    if coincident.size:
        raise DegenerateDirectionError(int(coincident[0]))
    return _pdop_of_rows(geometry_matrix(positions, anchor, ranges), with_bias)


def pdop_at(samples: Sequence[SyncedSample], hypothesis, with_bias: bool = False) -> float:
    # same formula as the true PDOP, evaluated at an estimated anchor
    return pdop_true(samples, hypothesis, with_bias)


def closest_point_index(samples: Sequence[SyncedSample]) -> int:
    """Index of the minimal measured range; ties go to the earliest timestamp."""
    t, _, ranges = stack_samples(samples)
    candidates = np.flatnonzero(ranges == ranges.min())
    return int(candidates[np.argmin(t[candidates])])


def pdop_closest_point(samples: Sequence[SyncedSample], min_samples: int = MIN_PDOP_SAMPLES,
                       with_bias: bool = False) -> float:
    """Conservative PDOP using the closest-point-to-anchor in place of the anchor.

    Args:
        samples: synchronized samples
        min_samples: floor on the number of samples (never below 4, so that
            the reduced geometry matrix keeps at least three rows)
        with_bias: also count the constant range bias as an unknown, which
            needs four rows besides the closest point
    Returns:
        sqrt(trace((G~^T G~)^-1)) with the closest sample's row removed, +inf when near-singular
    """
    floor = max(MIN_PDOP_SAMPLES, min_samples)
    if len(samples) < floor:
        raise InsufficientSamplesError(floor, len(samples))
    j = closest_point_index(samples)
    _, positions, ranges = stack_samples(samples)
    G = np.delete(geometry_matrix(positions, positions[j], ranges), j, axis=0)
    return _pdop_of_rows(G, with_bias)


def distance_condition_holds(samples: Sequence[SyncedSample], anchor, tol: float = 0.0) -> bool:
    """True when ||p_k - p_C|| <= ||p_k - p_A|| for every sample (conservativeness condition)."""
    anchor = as_vec3(anchor)
    _, positions, _ = stack_samples(samples)
    closest = positions[closest_point_index(samples)]
    to_closest = np.linalg.norm(positions - closest[None, :], axis=1)
    to_anchor = np.linalg.norm(positions - anchor[None, :], axis=1)
    return bool(np.all(to_closest <= to_anchor + tol))


@dataclass
class GeometrySummary:
    info: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    n_rows: int = 0
    last_t: float = float("-inf")
    # sum of the rows, the off-diagonal block of the bias-augmented information matrix
    row_sum: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class ClosestPointTracker:
    closest: Optional[SyncedSample] = None
    d_min: float = float("inf")


def _info_relative_to(samples: Sequence[SyncedSample],
                      reference: SyncedSample) -> Tuple[np.ndarray, np.ndarray, int]:
    rows = [s for s in samples if s is not reference]
    if not rows:
        return np.zeros((3, 3)), np.zeros(3), 0
    _, positions, ranges = stack_samples(rows)
    G = geometry_matrix(positions, reference.tag_pos, ranges)
    return G.T @ G, G.sum(axis=0), len(rows)


def rebuild_summary(samples: Sequence[SyncedSample]) -> Tuple[ClosestPointTracker, GeometrySummary]:
    """Batch construction of the streaming state from a sample buffer."""
    if len(samples) == 0:
        return ClosestPointTracker(), GeometrySummary()
    closest = samples[closest_point_index(samples)]
    info, row_sum, n_rows = _info_relative_to(samples, closest)
    last_t = max(s.t for s in samples)
    return ClosestPointTracker(closest, closest.range), GeometrySummary(info, n_rows, last_t, row_sum)


def update_summary(
        tracker: ClosestPointTracker,
        summary: GeometrySummary,
        new: SyncedSample,
        history: Sequence[SyncedSample] = (),
    ) -> Tuple[ClosestPointTracker, GeometrySummary, bool]:
    """Streaming update of the closest-point information matrix.

    Args:
        tracker: closest-point state before `new`
        summary: information matrix before `new`
        new: the incoming sample, strictly later than everything ingested so far
        history: the retained buffer of samples ingested before `new`; only
            read when the closest point changes and the matrix must be rebuilt
    Returns:
        (tracker', summary', rebuilt)
    """
    if new.t <= summary.last_t:
        raise OutOfOrderError(summary.last_t, new.t)

    if tracker.closest is None or new.range < tracker.d_min:
        info, row_sum, n_rows = _info_relative_to(history, new)
        logger.debug(f"closest point moved to t={new.t:.3f} (d_min={new.range:.3f}), rebuilt from {n_rows} rows")
        return ClosestPointTracker(new, new.range), GeometrySummary(info, n_rows, new.t, row_sum), True

    row = (new.tag_pos - tracker.closest.tag_pos) / new.range
    info = summary.info + np.outer(row, row)
    return tracker, GeometrySummary(info, summary.n_rows + 1, new.t, summary.row_sum + row), False


def evict_oldest(
        tracker: ClosestPointTracker,
        summary: GeometrySummary,
        evicted: SyncedSample,
        remaining: Sequence[SyncedSample],
    ) -> Tuple[ClosestPointTracker, GeometrySummary, bool]:
    """Removes one sample's contribution after it was dropped from a bounded buffer."""
    if evicted is tracker.closest:
        new_tracker, new_summary = rebuild_summary(remaining)
        new_summary.last_t = summary.last_t
        return new_tracker, new_summary, True
    row = (evicted.tag_pos - tracker.closest.tag_pos) / evicted.range
    info = summary.info - np.outer(row, row)
    return tracker, GeometrySummary(info, summary.n_rows - 1, summary.last_t, summary.row_sum - row), False


def summary_pdop(summary: GeometrySummary, with_bias: bool = False) -> float:
    """PDOP of a streaming summary; the bias-aware form needs four rows, the plain one three."""
    if summary.n_rows < MIN_PDOP_SAMPLES - (0 if with_bias else 1):
        return float("inf")
    if with_bias:
        return pdop_from_info(bias_reduced_info(summary.info, summary.row_sum, summary.n_rows))
    return pdop_from_info(summary.info)
