# comparison table row layout, the column order is part of the output contract
TABLE_COLUMNS = ("method", "avg_m", "med_m", "init", "gt1m", "ratio_pct")

BAD_INIT_THRESHOLD_M = 1.0

METHOD_NAMES = {
    "fixed": "Fixed",
    "our": "Our",
    "ransac": "RANSAC",
}

# four simulation settings with increasing range noise and outlier share
SCENARIOS = {
    "s1": dict(sigma_d=0.1, outlier_prob=0.02),
    "s2": dict(sigma_d=0.2, outlier_prob=0.05),
    "s3": dict(sigma_d=0.3, outlier_prob=0.08),
    "s4": dict(sigma_d=0.5, outlier_prob=0.10),
}

REPORT_CSV_COLUMNS = (
    "anchor_id", "phase", "t_init", "pdop_at_init", "x", "y", "z", "bias",
    "n_samples_used", "n_accepted", "n_rejected", "n_dropped", "error_vs_truth",
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DECLINED = 2
