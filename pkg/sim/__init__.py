from .trajectories import TRAJECTORY_KINDS, TrajectorySpec, gen_trajectory, place_anchors
from .ranges import NoiseModel, RangeStream, gen_ranges
from .baselines import RansacParams, filter_samples, ransac_consensus, ransac_iterations, run_fixed_window, run_ransac
from .mc import FixedWindow, MCConfig, MCReport, PdopTriggered, Ransac, run_mc, run_prefix_sweep, simulate_run
