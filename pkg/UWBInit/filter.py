"""Triangle-rule consistency check for streaming range measurements.

Between two samples the range cannot change by more than the tag moved:
|d_k - d_ref| <= ||p_k - p_ref|| + tau. Samples violating it are outliers.
The reference is the last *accepted* sample, so a single outlier never
causes its successor to be rejected as well.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .errors import OutOfOrderError
from .types import SyncedSample

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.1


@dataclass(frozen=True)
class FilterConfig:
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau >= 0.0:
            raise ValueError(f"`tau` should be non-negative but the value passed is {self.tau}")

    @classmethod
    def from_sigma(cls, sigma_d: Optional[float] = None, tau: Optional[float] = None) -> "FilterConfig":
        """tau given explicitly wins, else 2*sigma_d, else the 0.1 m default."""
        if tau is not None:
            return cls(tau=tau)
        if sigma_d is not None and sigma_d > 0.0:
            return cls(tau=2.0 * sigma_d)
        return cls()


@dataclass(frozen=True)
class FilterState:
    last_accepted: Optional[SyncedSample] = None
    accepted: int = 0
    rejected: int = 0
    last_t: float = float("-inf")
    # longest time between two consecutive accepted samples
    max_gap: float = 0.0

    @property
    def total(self) -> int:
        return self.accepted + self.rejected


def check(prev: SyncedSample, curr: SyncedSample, cfg: FilterConfig) -> bool:
    if curr.t <= prev.t:
        raise OutOfOrderError(prev.t, curr.t)
    delta_d = abs(curr.range - prev.range)
    delta_p = math.dist(curr.tag_pos, prev.tag_pos)
    return delta_d <= delta_p + cfg.tau


def ingest(state: FilterState, curr: SyncedSample, cfg: FilterConfig) -> Tuple[FilterState, bool]:
    """Runs one sample through the filter.

    Returns:
        (state', accepted)
    """
    if curr.t <= state.last_t:
        raise OutOfOrderError(state.last_t, curr.t)

    if state.last_accepted is None:
        return replace(state, last_accepted=curr, accepted=state.accepted + 1, last_t=curr.t), True

    if check(state.last_accepted, curr, cfg):
        gap = max(state.max_gap, curr.t - state.last_accepted.t)
        return replace(state, last_accepted=curr, accepted=state.accepted + 1, last_t=curr.t, max_gap=gap), True

    logger.debug(
        f"rejected range {curr.range:.3f} at t={curr.t:.3f} "
        f"(reference {state.last_accepted.range:.3f} at t={state.last_accepted.t:.3f})"
    )
    return replace(state, rejected=state.rejected + 1, last_t=curr.t), False
