__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateDirectionError,
    DegenerateGeometryError,
    DivergedError,
    InsufficientSamplesError,
    InterpolationError,
    NoBracketingPosesError,
    OutOfOrderError,
    ParseError,
    PoseGapError,
)

from .types import SyncedSample, make_samples, stack_samples

from .geometry import (
    ClosestPointTracker,
    GeometrySummary,
    bias_reduced_info,
    closest_point_index,
    distance_condition_holds,
    evict_oldest,
    pdop_at,
    pdop_closest_point,
    pdop_true,
    rebuild_summary,
    summary_pdop,
    update_summary,
)

from .filter import FilterConfig, FilterState

from .solver import (
    AnchorEstimate,
    KernelMode,
    RobustKernel,
    SolverConfig,
    adapt_alpha,
    barron_loss,
    barron_weight,
    estimate_anchor,
    refine,
    solve_ls,
    truncated_partition,
)

from .initializer import (
    AnchorManager,
    AnchorSession,
    EventKind,
    Phase,
    PipelineConfig,
    PoseBuffer,
    SessionEvent,
    TriggerConfig,
    finish_session,
    ingest_range,
    interpolate,
    manager_ingest,
)

from .pdop_ops import PDOP_METHODS, estimate_pdop
