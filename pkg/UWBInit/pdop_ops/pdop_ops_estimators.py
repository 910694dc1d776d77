import logging
from typing import Optional, Sequence

from ..errors import DegenerateGeometryError, DivergedError
from ..geometry import pdop_at, pdop_closest_point, pdop_true
from ..solver import KernelMode, SolverConfig, refine, solve_ls
from ..types import SyncedSample

logger = logging.getLogger(__name__)


def _pdop_closest_point(samples: Sequence[SyncedSample], with_bias: bool = False, **kwargs) -> float:
    return pdop_closest_point(samples, with_bias=with_bias)


def _pdop_true(samples: Sequence[SyncedSample], anchor=None, with_bias: bool = False, **kwargs) -> float:
    if anchor is None:
        raise ValueError("method 'true' needs the anchor position")
    return pdop_true(samples, anchor, with_bias)


def _pdop_ls(samples: Sequence[SyncedSample], with_bias: bool = False, **kwargs) -> float:
    # a rank-deficient linear system has no meaningful anchor to evaluate at
    try:
        seed = solve_ls(samples)
    except DegenerateGeometryError:
        return float("inf")
    return pdop_at(samples, seed.position, with_bias)


def _pdop_nls(samples: Sequence[SyncedSample], solver_cfg: Optional[SolverConfig] = None,
              with_bias: bool = False, **kwargs) -> float:
    try:
        seed = solve_ls(samples)
        estimate = refine(samples, seed, KernelMode.none(), solver_cfg or SolverConfig())
    except DegenerateGeometryError:
        return float("inf")
    except DivergedError as exc:
        logger.warning(f"{exc}; NLS PDOP evaluated at the linear solution")
        estimate = seed
    return pdop_at(samples, estimate.position, with_bias)
