from typing import Optional, Sequence

from ..solver import SolverConfig
from ..types import SyncedSample
from .pdop_ops_estimators import _pdop_closest_point, _pdop_ls, _pdop_nls, _pdop_true

PDOP_METHODS = ("closest_point", "ls", "nls", "true")


def estimate_pdop(
        samples: Sequence[SyncedSample],
        method: str = "closest_point",
        anchor=None,
        solver_cfg: Optional[SolverConfig] = None,
        with_bias: bool = False,
    ) -> float:
    """PDOP of a sample buffer under one of the anchor hypotheses
    Args:
        samples: synchronized samples of a single anchor
        method: 'closest_point' (conservative, anchor-free), 'ls' (at the linear
            solution), 'nls' (at the plain LM solution) or 'true' (at `anchor`)
        anchor: ground-truth anchor position, only used by 'true'
        solver_cfg: LM settings for 'nls'
        with_bias: count the constant range bias as a fourth unknown
    Returns:
        pdop: +inf when the geometry (or, for 'ls'/'nls', the solve) is degenerate
    """

    kwargs = dict(samples=samples, anchor=anchor, solver_cfg=solver_cfg, with_bias=with_bias)

    if method == 'closest_point': return _pdop_closest_point(**kwargs)
    elif method == 'ls': return _pdop_ls(**kwargs)
    elif method == 'nls': return _pdop_nls(**kwargs)
    elif method == 'true': return _pdop_true(**kwargs)
    else: raise NotImplementedError(f"Unknown method {method} for estimate_pdop")
