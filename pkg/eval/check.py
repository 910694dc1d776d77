import math


def check_pdop_at_init(report, threshold):
    cnt = 0
    for anchor in report["anchors"]:
        if anchor["phase"] == "Initialized" and not anchor["pdop_at_init"] < threshold:
            cnt += 1
    if cnt > 0:
        print('Initializations at or above the PDOP threshold: ', cnt)
    return {"pdop at init >= threshold": cnt}


def check_not_converged(report, threshold):
    cnt = sum(1 for anchor in report["anchors"] if anchor["phase"] == "Initialized" and not anchor["converged"])
    if cnt > 0:
        print('Initialized without solver convergence: ', cnt)
    return {"not converged": cnt}


def check_high_rejection(report, threshold, limit=0.5):
    cnt = 0
    for anchor in report["anchors"]:
        seen = anchor["n_accepted"] + anchor["n_rejected"]
        if seen and anchor["n_rejected"] / seen > limit:
            cnt += 1
    if cnt > 0:
        print('Anchors with more than half of their ranges rejected: ', cnt)
    return {"high rejection rate": cnt}


def check_large_error(report, threshold, limit=1.0):
    cnt = 0
    for anchor in report["anchors"]:
        error = anchor.get("error_vs_truth")
        if error is not None and (not math.isfinite(error) or error > limit):
            cnt += 1
    if cnt > 0:
        print('Initialized anchors off by more than 1 m: ', cnt)
    return {"error vs truth > 1 m": cnt}


def check_run_report(report, threshold):
    """Sanity checks over a run report; every check contributes one counter to the returned list."""
    warnings = []
    check_fn = [check_pdop_at_init, check_not_converged, check_high_rejection, check_large_error]
    for fn in check_fn:
        warnings.append(fn(report, threshold))
    return warnings
