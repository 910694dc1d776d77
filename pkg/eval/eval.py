from typing import Optional, Sequence

import numpy as np

from constant import BAD_INIT_THRESHOLD_M, TABLE_COLUMNS


def _initialized(errors: Sequence[Optional[float]]) -> np.ndarray:
    # None marks an anchor the strategy declined to initialize
    return np.asarray([e for e in errors if e is not None], dtype=np.float64)


def eval_avg_error(errors):
    valid = _initialized(errors)
    return {"avg_m": float(np.mean(valid)) if valid.size else float("nan")}


def eval_med_error(errors):
    valid = _initialized(errors)
    return {"med_m": float(np.median(valid)) if valid.size else float("nan")}


def eval_bad_inits(errors, threshold=BAD_INIT_THRESHOLD_M):
    valid = _initialized(errors)
    init = int(valid.size)
    gt1m = int(np.sum(valid > threshold))
    ratio = 100.0 * gt1m / init if init else 0.0
    return {"init": init, "gt1m": gt1m, "ratio_pct": ratio}


def eval_strategy(method: str, errors: Sequence[Optional[float]], threshold: float = BAD_INIT_THRESHOLD_M) -> dict:
    """One comparison table row: average and median error over initialized anchors, init count, bad inits and their ratio.

    Args:
        method: row label, e.g. "Fixed" or "Our"
        errors: per (run, anchor) position error in meters, None where no initialization happened
        threshold: error above which an initialization counts as bad
    Returns:
        dict keyed by TABLE_COLUMNS
    """
    row = {"method": method}
    row.update(eval_avg_error(errors))
    row.update(eval_med_error(errors))
    row.update(eval_bad_inits(errors, threshold))
    return {key: row[key] for key in TABLE_COLUMNS}


def format_row(row: dict) -> str:
    return (
        f"{row['method']:<8} avg {row['avg_m']:.3f} m  med {row['med_m']:.3f} m  "
        f"init {row['init']:>5}  >1m {row['gt1m']:>4}  ratio {row['ratio_pct']:.2f}%"
    )
