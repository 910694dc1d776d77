"""Anchor position and range-bias estimation.

The pipeline is a coarse linear solve followed by nonlinear refinement:

    1. `solve_ls` differences every squared range against a pivot sample, which
       turns d_k = ||p_k - p_A|| + gamma into a linear system in (p_A, gamma).
    2. `refine` runs Levenberg-Marquardt on r_k = ||p_k - p_A|| + gamma - d_k.
       Residuals may be reweighted (IRLS) by the generalized robust loss, either
       with a fixed shape alpha or with alpha re-fitted to the residual
       distribution while iterating (`adapt_alpha`).
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, linalg, optimize

from .errors import DegenerateGeometryError, DivergedError, InsufficientSamplesError
from .geometry import closest_point_index
from .types import SyncedSample, as_vec3, stack_samples

logger = logging.getLogger(__name__)

ALPHA_MIN = -10.0
ALPHA_GRID_STEP = 0.1
MIN_SOLVER_SAMPLES = 5
MIN_ALPHA_RESIDUALS = 10
# below this predicted distance the Jacobian row reuses the previous direction
JACOBIAN_GUARD = 1e-6


@dataclass(frozen=True)
class RobustKernel:
    alpha: float
    c: float

    def __post_init__(self):
        if not self.c > 0.0:
            raise ValueError(f"kernel scale `c` should be positive but the value passed is {self.c}")
        if not ALPHA_MIN <= self.alpha <= 2.0:
            raise ValueError(f"kernel shape `alpha` should be in [{ALPHA_MIN}, 2] but the value passed is {self.alpha}")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-10
    lm_lambda_init: float = 1e-3
    lm_lambda_factor: float = 10.0
    alpha_min: float = ALPHA_MIN
    alpha_update_period: int = 1
    # alpha changes smaller than this keep the previous kernel so LM can settle
    alpha_tolerance: float = 1e-3
    trunc_bound: float = 10.0
    quadrature_points: int = 2001

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"`max_iterations` should be >= 1, got {self.max_iterations}")
        if not (self.gradient_tolerance > 0.0 and self.step_tolerance > 0.0):
            raise ValueError("solver tolerances should be positive")
        if not self.lm_lambda_factor > 1.0:
            raise ValueError(f"`lm_lambda_factor` should be > 1, got {self.lm_lambda_factor}")
        if not self.trunc_bound > 0.0:
            raise ValueError(f"`trunc_bound` should be positive, got {self.trunc_bound}")
        if not ALPHA_MIN <= self.alpha_min < 2.0:
            raise ValueError(f"`alpha_min` should be in [{ALPHA_MIN}, 2), got {self.alpha_min}")
        if self.alpha_update_period < 1:
            raise ValueError(f"`alpha_update_period` should be >= 1, got {self.alpha_update_period}")
        if self.quadrature_points < 3 or self.quadrature_points % 2 == 0:
            raise ValueError(f"`quadrature_points` should be odd and >= 3, got {self.quadrature_points}")


@dataclass
class AnchorEstimate:
    position: np.ndarray
    bias: float
    residual_rms: float
    iterations: int
    converged: bool
    alpha_final: Optional[float] = None
    rank: int = 4
    cost_history: Tuple[float, ...] = field(default=())

    def error_to(self, anchor) -> float:
        return float(np.linalg.norm(self.position - as_vec3(anchor)))


@dataclass(frozen=True)
class KernelMode:
    kind: str = "none"
    kernel: Optional[RobustKernel] = None
    c: Optional[float] = None

    @classmethod
    def none(cls) -> "KernelMode":
        return cls("none")

    @classmethod
    def fixed(cls, kernel: RobustKernel) -> "KernelMode":
        return cls("fixed", kernel=kernel)

    @classmethod
    def adaptive(cls, c: float) -> "KernelMode":
        if not c > 0.0:
            raise ValueError(f"adaptive kernel scale should be positive, got {c}")
        return cls("adaptive", c=c)


def _as_output(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


def barron_loss(r, kernel: RobustKernel, alpha_min: float = ALPHA_MIN):
    """Generalized robust loss rho(r, alpha, c).

    alpha = 2 is the quadratic, alpha = 0 the Cauchy/log loss and
    alpha <= alpha_min stands in for alpha -> -inf (Welsch).
    """
    x2 = (np.asarray(r, dtype=np.float64) / kernel.c) ** 2
    alpha = kernel.alpha
    if alpha == 2.0:
        loss = 0.5 * x2
    elif alpha == 0.0:
        loss = np.log1p(0.5 * x2)
    elif alpha <= alpha_min:
        loss = -np.expm1(-0.5 * x2)
    else:
        b = abs(alpha - 2.0)
        loss = (b / alpha) * np.expm1(0.5 * alpha * np.log1p(x2 / b))
    return _as_output(loss, r)


def barron_weight(r, kernel: RobustKernel, alpha_min: float = ALPHA_MIN):
    """IRLS weight psi(r)/r of the generalized loss, psi = d rho / d r."""
    x2 = (np.asarray(r, dtype=np.float64) / kernel.c) ** 2
    inv_c2 = 1.0 / kernel.c ** 2
    alpha = kernel.alpha
    if alpha == 2.0:
        weight = np.full_like(x2, inv_c2)
    elif alpha == 0.0:
        weight = 2.0 / (np.asarray(r, dtype=np.float64) ** 2 + 2.0 * kernel.c ** 2)
    elif alpha <= alpha_min:
        weight = inv_c2 * np.exp(-0.5 * x2)
    else:
        b = abs(alpha - 2.0)
        weight = inv_c2 * np.exp((0.5 * alpha - 1.0) * np.log1p(x2 / b))
    return _as_output(weight, r)


@lru_cache(maxsize=4096)
def truncated_partition(alpha: float, trunc_bound: float = 10.0, points: int = 2001,
                        alpha_min: float = ALPHA_MIN) -> float:
    """Z(alpha) = integral over [-B, B] of exp(-rho(u, alpha, 1)), composite Simpson."""
    u = np.linspace(-trunc_bound, trunc_bound, points)
    density = np.exp(-barron_loss(u, RobustKernel(alpha, 1.0), alpha_min))
    return float(integrate.simpson(density, x=u))


def alpha_objective(residuals: np.ndarray, alpha: float, c: float, cfg: SolverConfig) -> float:
    """Negative log-likelihood of the residuals under the truncated generalized-loss density."""
    loss = barron_loss(residuals, RobustKernel(alpha, c), cfg.alpha_min)
    z = truncated_partition(float(alpha), cfg.trunc_bound, cfg.quadrature_points, cfg.alpha_min)
    return float(np.sum(loss) + residuals.size * np.log(z))


def alpha_grid(alpha_min: float = ALPHA_MIN, step: float = ALPHA_GRID_STEP) -> np.ndarray:
    count = int(round((2.0 - alpha_min) / step)) + 1
    return np.round(np.linspace(alpha_min, 2.0, count), 12)


def adapt_alpha(residuals: Sequence[float], c: float, cfg: SolverConfig = SolverConfig()) -> float:
    """Fits the kernel shape to a residual sample.

    Grid search over [alpha_min, 2] with step 0.1, then golden-section
    refinement inside the cell around the best grid point.
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.size < MIN_ALPHA_RESIDUALS:
        raise InsufficientSamplesError(MIN_ALPHA_RESIDUALS, residuals.size)
    if not c > 0.0:
        raise ValueError(f"kernel scale `c` should be positive but the value passed is {c}")

    grid = alpha_grid(cfg.alpha_min)
    values = np.array([alpha_objective(residuals, a, c, cfg) for a in grid])
    i = int(np.argmin(values))
    best = float(grid[i])
    if 0 < i < len(grid) - 1:
        lo, hi = float(grid[i - 1]), float(grid[i + 1])
        try:
            result = optimize.minimize_scalar(
                lambda a: alpha_objective(residuals, a, c, cfg),
                bracket=(lo, best, hi), method="golden", tol=1e-5,
            )
            if lo <= result.x <= hi and result.fun <= values[i]:
                best = float(result.x)
        except ValueError:
            # flat cell, the grid point stands
            pass
    return best


def _design_system(positions: np.ndarray, ranges: np.ndarray, pivot: int) -> Tuple[np.ndarray, np.ndarray]:
    mask = np.arange(len(ranges)) != pivot
    dp = positions[mask] - positions[pivot]
    dd = ranges[mask] - ranges[pivot]
    A = np.hstack([-dp, dd[:, None]])
    sq_norms = np.sum(positions ** 2, axis=1)
    b = 0.5 * ((ranges[mask] ** 2 - ranges[pivot] ** 2) - (sq_norms[mask] - sq_norms[pivot]))
    return A, b


def range_residuals(positions: np.ndarray, ranges: np.ndarray, anchor: np.ndarray, bias: float) -> np.ndarray:
    return np.linalg.norm(positions - anchor[None, :], axis=1) + bias - ranges


def solve_ls(samples: Sequence[SyncedSample], pivot: Optional[int] = None,
             allow_rank_deficient: bool = False) -> AnchorEstimate:
    """Coarse anchor/bias solution of the pivot-differenced range equations.

    Args:
        samples: at least 5 synchronized samples
        pivot: index of the differencing sample, defaults to the closest point
        allow_rank_deficient: return the minimum-norm solution flagged
            `converged=False` instead of raising on rank-deficient geometry
    """
    n = len(samples)
    if n < MIN_SOLVER_SAMPLES:
        raise InsufficientSamplesError(MIN_SOLVER_SAMPLES, n)
    if pivot is None:
        pivot = closest_point_index(samples)
    elif not 0 <= pivot < n:
        raise ValueError(f"pivot index {pivot} out of range for {n} samples")

    _, positions, ranges = stack_samples(samples)
    A, b = _design_system(positions, ranges, pivot)
    singular_values = linalg.svdvals(A)
    tol = singular_values[0] * max(A.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(singular_values > tol))
    if rank < 4 and not allow_rank_deficient:
        raise DegenerateGeometryError(rank)

    x, _, _, _ = linalg.lstsq(A, b)
    position, bias = x[:3], float(x[3])
    rms = float(np.sqrt(np.mean(range_residuals(positions, ranges, position, bias) ** 2)))
    return AnchorEstimate(position, bias, rms, iterations=0, converged=rank == 4, rank=rank)


def _residuals_and_directions(theta: np.ndarray, positions: np.ndarray, ranges: np.ndarray,
                              prev_dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    diff = theta[:3][None, :] - positions
    dist = np.linalg.norm(diff, axis=1)
    guarded = dist < JACOBIAN_GUARD
    dirs = diff / np.where(guarded, 1.0, dist)[:, None]
    if np.any(guarded):
        dirs[guarded] = prev_dirs[guarded]
    return dist + theta[3] - ranges, dirs


def refine(samples: Sequence[SyncedSample], initial: AnchorEstimate,
           kernel_mode: KernelMode = KernelMode.none(),
           cfg: SolverConfig = SolverConfig()) -> AnchorEstimate:
    """Levenberg-Marquardt refinement of (p_A, gamma), optionally robustified.

    Args:
        samples: at least 5 synchronized samples
        initial: starting point, usually the `solve_ls` result
        kernel_mode: plain least squares, a fixed robust kernel, or an
            adaptive kernel whose shape is re-fitted every
            `cfg.alpha_update_period` iterations
        cfg: solver settings
    Returns:
        the refined estimate; `converged` is set when the gradient or step
        tolerance was met before `cfg.max_iterations`
    """
    n = len(samples)
    if n < MIN_SOLVER_SAMPLES:
        raise InsufficientSamplesError(MIN_SOLVER_SAMPLES, n)
    theta = np.concatenate([as_vec3(initial.position), [float(initial.bias)]])
    if not np.all(np.isfinite(theta)):
        raise ValueError(f"initial estimate is not finite: {theta}")

    _, positions, ranges = stack_samples(samples)
    adaptive = kernel_mode.kind == "adaptive"
    kernel = kernel_mode.kernel if kernel_mode.kind == "fixed" else None
    alpha = None
    if adaptive:
        alpha = 2.0
        kernel = RobustKernel(alpha, kernel_mode.c)

    def cost(r: np.ndarray) -> float:
        if kernel is None:
            return 0.5 * float(r @ r)
        return float(np.sum(barron_loss(r, kernel, cfg.alpha_min)))

    def weights(r: np.ndarray) -> np.ndarray:
        if kernel is None:
            return np.ones_like(r)
        return barron_weight(r, kernel, cfg.alpha_min)

    dirs = np.tile(np.array([1.0, 0.0, 0.0]), (n, 1))
    r, dirs = _residuals_and_directions(theta, positions, ranges, dirs)
    lam = cfg.lm_lambda_init
    history = []
    converged = False
    iteration = 0

    while iteration < cfg.max_iterations:
        if adaptive and iteration % cfg.alpha_update_period == 0 and n >= MIN_ALPHA_RESIDUALS:
            fitted = adapt_alpha(r, kernel_mode.c, cfg)
            if abs(fitted - alpha) >= cfg.alpha_tolerance:
                alpha = fitted
                kernel = RobustKernel(alpha, kernel_mode.c)

        w = weights(r)
        J = np.hstack([dirs, np.ones((n, 1))])
        gradient = J.T @ (w * r)
        if not np.all(np.isfinite(gradient)):
            raise DivergedError(iteration)
        if np.max(np.abs(gradient)) < cfg.gradient_tolerance:
            converged = True
            break

        hessian = J.T @ (w[:, None] * J)
        current = cost(r)
        iteration += 1
        stepped = False
        while lam < 1e16:
            try:
                step = linalg.solve(hessian + lam * np.eye(4), -gradient, assume_a="pos")
            except linalg.LinAlgError:
                lam *= cfg.lm_lambda_factor
                continue
            trial = theta + step
            r_trial, dirs_trial = _residuals_and_directions(trial, positions, ranges, dirs)
            trial_cost = cost(r_trial)
            if not (np.all(np.isfinite(trial)) and np.isfinite(trial_cost)):
                raise DivergedError(iteration)
            if trial_cost < current:
                theta, r, dirs = trial, r_trial, dirs_trial
                lam = max(lam / cfg.lm_lambda_factor, 1e-12)
                history.append(trial_cost)
                stepped = True
                break
            lam *= cfg.lm_lambda_factor

        if not stepped:
            # no descent direction left at any damping
            converged = True
            break
        if np.linalg.norm(step) <= cfg.step_tolerance * (np.linalg.norm(theta) + cfg.step_tolerance):
            converged = True
            break

    rms = float(np.sqrt(np.mean(r ** 2)))
    if not converged:
        logger.debug(f"LM stopped after {iteration} iterations without meeting tolerances (rms={rms:.4f})")
    return AnchorEstimate(
        position=theta[:3].copy(), bias=float(theta[3]), residual_rms=rms,
        iterations=iteration, converged=converged,
        alpha_final=alpha if adaptive else None, rank=initial.rank,
        cost_history=tuple(history),
    )


def estimate_anchor(samples: Sequence[SyncedSample], kernel_mode: KernelMode = KernelMode.none(),
                    cfg: SolverConfig = SolverConfig(), allow_rank_deficient: bool = False) -> AnchorEstimate:
    """LS seed followed by LM refinement; a diverging refinement falls back to the seed.

    Robust kernels start from the plain LM solution rather than the LS seed:
    the LS seed absorbs outliers through its pivot, and a kernel fitted to
    residuals that are all many `c` wide has vanishing weights.
    """
    seed = solve_ls(samples, allow_rank_deficient=allow_rank_deficient)
    try:
        start = seed
        if kernel_mode.kind != "none":
            start = refine(samples, seed, KernelMode.none(), cfg)
        estimate = refine(samples, start, kernel_mode, cfg)
        estimate.iterations += start.iterations
    except DivergedError as exc:
        logger.warning(f"{exc}; keeping the linear solution")
        seed.converged = False
        return seed
    if not seed.converged:
        estimate.converged = False
    return estimate
