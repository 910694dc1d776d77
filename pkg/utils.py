import enum
import hashlib
import json
import logging
import math
import os
from dataclasses import MISSING, asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Union, get_args, get_origin

import numpy as np
import yaml
from dotenv import dotenv_values

from constant import METHOD_NAMES, SCENARIOS
from data.dataset_presets import get_presets
from sim.mc import FixedWindow, MCConfig, PdopTriggered, Ransac
from sim.ranges import NoiseModel
from sim.trajectories import TrajectorySpec
from UWBInit.errors import ConfigError
from UWBInit.filter import FilterConfig
from UWBInit.initializer import PipelineConfig, TriggerConfig
from UWBInit.solver import SolverConfig

logger = logging.getLogger(__name__)

CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs', 'config.yaml')
NONE_TOKENS = ("none", "null", "")


@dataclass
class ToolConfig:
    """Every tunable of the tool in one flat namespace."""

    ## filter
    tau: Optional[float] = field(default=None, metadata={"help": "Triangle-rule threshold in m, none for 2 * sigma_d"})

    ## trigger
    pdop_threshold: float = field(default=1.0, metadata={"help": "Initialize once the closest-point PDOP drops below this"})
    min_samples: int = field(default=10, metadata={"help": "Accepted samples required before the trigger is evaluated"})
    max_buffer: int = field(default=10000, metadata={"help": "Per-anchor sample buffer bound, oldest dropped first"})
    pose_max_gap: float = field(default=1.0, metadata={"help": "Largest pose gap in s a range may be interpolated across"})
    rerefine_every: int = field(default=0, metadata={"help": "Re-refine an initialized anchor every K accepted samples, 0 disables"})
    bias_aware: bool = field(default=True, metadata={"help": "Count the range bias as a fourth unknown in the trigger PDOP"})
    verify_at_estimate: bool = field(default=True, metadata={"help": "Require PDOP < threshold at the solved anchor too"})
    retry_every: int = field(default=20, metadata={"help": "Accepted samples between initialization attempts"})

    ## solver
    max_iterations: int = field(default=100, metadata={"help": "LM iteration cap"})
    gradient_tolerance: float = field(default=1e-10, metadata={"help": "LM stops once the gradient max-norm is below this"})
    step_tolerance: float = field(default=1e-10, metadata={"help": "LM stops once the relative step is below this"})
    lm_lambda_init: float = field(default=1e-3, metadata={"help": "Initial LM damping"})
    lm_lambda_factor: float = field(default=10.0, metadata={"help": "Multiplicative LM damping update"})
    alpha_min: float = field(default=-10.0, metadata={"help": "Lower end of the kernel shape search"})
    alpha_update_period: int = field(default=1, metadata={"help": "Re-fit the kernel shape every N LM iterations"})
    alpha_tolerance: float = field(default=1e-3, metadata={"help": "Kernel shape changes below this are ignored"})
    trunc_bound: float = field(default=10.0, metadata={"help": "Truncation bound of the kernel partition integral"})
    quadrature_points: int = field(default=2001, metadata={"help": "Simpson points for the partition integral (odd)"})
    kernel_scale: Optional[float] = field(default=None, metadata={"help": "Adaptive kernel scale c in m, none for sigma_d"})

    ## noise
    sigma_d: float = field(default=0.1, metadata={"help": "Range noise standard deviation in m"})
    bias: float = field(default=0.0, metadata={"help": "Constant range bias in m"})
    outlier_prob: float = field(default=0.0, metadata={"help": "Probability that a range carries an outlier offset"})
    outlier_low: float = field(default=0.5, metadata={"help": "Smallest outlier magnitude in m"})
    outlier_high: float = field(default=5.0, metadata={"help": "Largest outlier magnitude in m"})
    max_range: Optional[float] = field(default=20.0, metadata={"help": "Radio range in m, none for unlimited"})
    positive_outliers: bool = field(default=True, metadata={"help": "Outliers only lengthen ranges, false draws their sign at random"})

    ## trajectory
    trajectory: str = field(default="tunnel", metadata={"help": "Trajectory preset name"})
    duration: Optional[float] = field(default=None, metadata={"help": "Trajectory duration in s, none for the preset"})
    rate: Optional[float] = field(default=None, metadata={"help": "Pose and range rate in Hz, none for the preset"})
    n_anchors: int = field(default=30, metadata={"help": "Anchors per simulated run"})

    ## Monte Carlo
    runs: int = field(default=100, metadata={"help": "Monte Carlo runs per scenario"})
    seed: int = field(default=0, metadata={"help": "Base seed, run i uses seed + i"})
    scenarios: Optional[str] = field(default="s1,s2,s3,s4", metadata={"help": "Comma separated scenario presets, none for the noise keys"})
    strategies: str = field(default="fixed,our", metadata={"help": "Comma separated strategies: fixed, our, ransac"})
    fixed_window: Optional[int] = field(default=None, metadata={"help": "Fixed-window size, none for the whole trajectory"})
    ransac_p: float = field(default=0.95, metadata={"help": "RANSAC success probability"})
    ransac_s: int = field(default=60, metadata={"help": "RANSAC subset size"})
    ransac_e: float = field(default=0.1, metadata={"help": "RANSAC assumed outlier fraction"})
    ransac_threshold: Optional[float] = field(default=None, metadata={"help": "RANSAC inlier threshold in m, none for 3 * sigma_d"})
    ransac_max_rounds: Optional[int] = field(default=None, metadata={"help": "Cap on RANSAC rounds"})
    workers: int = field(default=1, metadata={"help": "Worker processes for Monte Carlo runs"})

    ## prefix sweep
    sweep_anchor: int = field(default=0, metadata={"help": "Anchor index followed by the prefix sweep"})
    sweep_step: int = field(default=10, metadata={"help": "Prefix growth between sweep rows"})
    sweep_min_n: int = field(default=10, metadata={"help": "First prefix length of the sweep"})


def load_config(path: str = CONFIG_PATH) -> Dict[str, Any]:
    with open(path) as f:
        try:
            config = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError(f"{path} should hold a mapping, got {type(config).__name__}")
    return config


def load_overrides(path: str) -> Dict[str, Optional[str]]:
    """Flat `key = value` lines; `#` starts a comment."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    return dict(dotenv_values(path, interpolate=False))


def _coerce(name: str, annotation, value):
    optional = False
    if get_origin(annotation) is Union:
        optional = type(None) in get_args(annotation)
        annotation = next(a for a in get_args(annotation) if a is not type(None))

    if value is None or (isinstance(value, str) and value.strip().lower() in NONE_TOKENS):
        if optional:
            return None
        raise ConfigError(f"`{name}` needs a value")

    try:
        if annotation is bool:
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "yes", "1"):
                return True
            if text in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if isinstance(value, bool):
            raise ValueError(value)
        if annotation is int:
            if isinstance(value, float):
                if not value.is_integer():
                    raise ValueError(value)
                return int(value)
            return int(str(value).strip())
        if annotation is float:
            result = float(str(value).strip()) if isinstance(value, str) else float(value)
            if math.isnan(result):
                raise ValueError(value)
            return result
        return str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"`{name}`: cannot parse {value!r} as {annotation.__name__}") from None


def _apply(values: Dict[str, Any], source: str, current: Dict[str, Any]) -> None:
    known = {f.name: f for f in fields(ToolConfig)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key `{key}` in {source}")
        current[key] = _coerce(key, known[key].type, value)


def resolve_config(config_path: Optional[str] = None, seed: Optional[int] = None,
                   defaults_path: str = CONFIG_PATH) -> ToolConfig:
    """YAML defaults, then the flat override file, then the --seed flag."""
    current = {f.name: f.default for f in fields(ToolConfig) if f.default is not MISSING}
    _apply(load_config(defaults_path), defaults_path, current)
    if config_path is not None:
        _apply(load_overrides(config_path), config_path, current)
    if seed is not None:
        current["seed"] = seed
    return ToolConfig(**current)


## typed library configs

def solver_config(cfg: ToolConfig) -> SolverConfig:
    return SolverConfig(
        max_iterations=cfg.max_iterations,
        gradient_tolerance=cfg.gradient_tolerance,
        step_tolerance=cfg.step_tolerance,
        lm_lambda_init=cfg.lm_lambda_init,
        lm_lambda_factor=cfg.lm_lambda_factor,
        alpha_min=cfg.alpha_min,
        alpha_update_period=cfg.alpha_update_period,
        alpha_tolerance=cfg.alpha_tolerance,
        trunc_bound=cfg.trunc_bound,
        quadrature_points=cfg.quadrature_points,
    )


def pipeline_config(cfg: ToolConfig, sigma_d: Optional[float] = None) -> PipelineConfig:
    sigma_d = cfg.sigma_d if sigma_d is None else sigma_d
    if cfg.kernel_scale is not None:
        scale = cfg.kernel_scale
    else:
        scale = sigma_d if sigma_d > 0.0 else PipelineConfig.kernel_scale
    trigger = TriggerConfig(
        pdop_threshold=cfg.pdop_threshold,
        min_samples=cfg.min_samples,
        max_buffer=cfg.max_buffer,
        pose_max_gap=cfg.pose_max_gap,
        rerefine_every=cfg.rerefine_every,
        bias_aware=cfg.bias_aware,
        verify_at_estimate=cfg.verify_at_estimate,
        retry_every=cfg.retry_every,
    )
    return PipelineConfig(trigger, FilterConfig.from_sigma(sigma_d, cfg.tau), solver_config(cfg), scale)


def noise_model(cfg: ToolConfig, scenario: Optional[str] = None) -> NoiseModel:
    sigma_d, outlier_prob = cfg.sigma_d, cfg.outlier_prob
    if scenario is not None:
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario `{scenario}`, expected one of {sorted(SCENARIOS)}")
        sigma_d, outlier_prob = SCENARIOS[scenario]["sigma_d"], SCENARIOS[scenario]["outlier_prob"]
    return NoiseModel(
        sigma_d=sigma_d, bias=cfg.bias, outlier_prob=outlier_prob,
        outlier_low=cfg.outlier_low, outlier_high=cfg.outlier_high,
        seed=cfg.seed, max_range=cfg.max_range, positive_outliers=cfg.positive_outliers,
    )


def trajectory_spec(cfg: ToolConfig) -> TrajectorySpec:
    presets = get_presets()
    if cfg.trajectory not in presets:
        raise ConfigError(f"unknown trajectory preset `{cfg.trajectory}`, expected one of {sorted(presets)}")
    preset = dict(presets[cfg.trajectory])
    if cfg.duration is not None:
        preset["duration"] = cfg.duration
    if cfg.rate is not None:
        preset["rate"] = cfg.rate
    return TrajectorySpec(**preset)


def _split(text: Optional[str]) -> List[str]:
    return [] if text is None else [item.strip() for item in text.split(",") if item.strip()]


def strategies(cfg: ToolConfig) -> tuple:
    chosen = []
    for key in _split(cfg.strategies):
        if key == "fixed":
            chosen.append(FixedWindow(cfg.fixed_window, name=METHOD_NAMES[key]))
        elif key == "our":
            chosen.append(PdopTriggered(name=METHOD_NAMES[key]))
        elif key == "ransac":
            chosen.append(Ransac(cfg.ransac_p, cfg.ransac_s, cfg.ransac_e, cfg.ransac_threshold,
                                 cfg.ransac_max_rounds, name=METHOD_NAMES[key]))
        else:
            raise ConfigError(f"unknown strategy `{key}`, expected any of {sorted(METHOD_NAMES)}")
    if not chosen:
        raise ConfigError("`strategies` is empty")
    return tuple(chosen)


def scenario_names(cfg: ToolConfig) -> List[Optional[str]]:
    names = _split(cfg.scenarios)
    return names if names else [None]


def mc_config(cfg: ToolConfig, scenario: Optional[str] = None) -> MCConfig:
    noise = noise_model(cfg, scenario)
    return MCConfig(
        runs=cfg.runs,
        strategies=strategies(cfg),
        noise=noise,
        trajectory=trajectory_spec(cfg),
        n_anchors=cfg.n_anchors,
        base_seed=cfg.seed,
        pipeline=pipeline_config(cfg, noise.sigma_d),
        scenario=scenario or "custom",
        workers=cfg.workers,
    )


## serialization

def to_jsonable(obj):
    if isinstance(obj, enum.Enum):
        return to_jsonable(obj.value)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, shortest round-trip floats, non-finite values as null."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_echo(cfg: ToolConfig) -> Dict[str, Any]:
    return asdict(cfg)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
